#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "geomap/benchgen.hpp"
#include "geomap/detect.hpp"
#include "geomap/error.hpp"
#include "geomap/geodb.hpp"
#include "geomap/hie.hpp"
#include "geomap/image.hpp"
#include "geomap/lithology.hpp"
#include "geomap/model.hpp"
#include "geomap/validate.hpp"

namespace geomap {

inline constexpr int kFixtureDefaultWidth = 1024;
inline constexpr int kFixtureDefaultHeight = 768;
inline constexpr int kFixtureMaxEdge = 6146;
/// Width of the frame drawn inside every component box.
inline constexpr int kFixtureFrame = 2;

struct FixtureUnit {
  std::string rock_name;
  std::optional<Rgb> color;
  std::string age;
};

struct FixtureSpec {
  std::string map_id = "fixture-0";
  std::uint64_t seed = 1;
  int width = kFixtureDefaultWidth;
  int height = kFixtureDefaultHeight;
  Language language = Language::English;
  std::string sheet_name = "Cedar Ridge";
  std::string scale = "1:250000";
  LonLatRange lonlat{-82.0, -81.5, 35.0, 35.25};
  std::set<std::string> neighbors = {"Ashford", "Bell Creek"};
  /// Empty: drawn from the seed.
  std::vector<FixtureUnit> legend;
  int unit_count = 6;
  /// Per legend unit, summing to 1. Empty: drawn from the seed.
  std::vector<double> area_fractions;
  std::optional<FaultGrid> faults;
  /// Components to draw; empty means all seven.
  std::vector<ComponentKind> include;
  /// Explicit boxes overriding the default layout.
  std::map<ComponentKind, BBox> layout;
};

inline void to_json(json& j, const FixtureUnit& u) {
  j = json{{"rock_name", u.rock_name}, {"age", u.age}};
  if (u.color) j["color"] = to_hex(*u.color);
}
inline void from_json(const json& j, FixtureUnit& u) {
  u.rock_name = j.at("rock_name").get<std::string>();
  u.age = j.value("age", "");
  if (j.contains("color")) u.color = j["color"].get<Rgb>();
}

inline void to_json(json& j, const FixtureSpec& s) {
  j = json{{"map_id", s.map_id},       {"seed", s.seed},     {"width", s.width},
           {"height", s.height},       {"language", s.language}, {"sheet_name", s.sheet_name},
           {"scale", s.scale},         {"lonlat", s.lonlat}, {"neighbors", s.neighbors},
           {"legend", s.legend},       {"unit_count", s.unit_count},
           {"area_fractions", s.area_fractions}};
  if (s.faults) j["faults"] = *s.faults;
  if (!s.include.empty()) j["include"] = s.include;
  if (!s.layout.empty()) {
    json l = json::object();
    for (const auto& [k, b] : s.layout) l[std::string(to_string(k))] = b;
    j["layout"] = l;
  }
}
inline void from_json(const json& j, FixtureSpec& s) {
  s = FixtureSpec{};
  s.map_id = j.at("map_id").get<std::string>();
  s.seed = j.value("seed", s.seed);
  s.width = j.value("width", s.width);
  s.height = j.value("height", s.height);
  s.language = j.value("language", s.language);
  s.sheet_name = j.value("sheet_name", s.sheet_name);
  s.scale = j.value("scale", s.scale);
  if (j.contains("lonlat")) s.lonlat = j["lonlat"].get<LonLatRange>();
  s.neighbors = j.value("neighbors", s.neighbors);
  s.legend = j.value("legend", s.legend);
  s.unit_count = j.value("unit_count", s.unit_count);
  s.area_fractions = j.value("area_fractions", s.area_fractions);
  if (j.contains("faults")) s.faults = j["faults"].get<FaultGrid>();
  s.include = j.value("include", s.include);
  if (j.contains("layout"))
    for (const auto& [k, b] : j["layout"].items()) {
      auto kind = component_kind_from(k);
      if (!kind) throw ParseError(fmt::format("fixture layout: unknown component '{}'", k));
      s.layout[*kind] = b.get<BBox>();
    }
}

struct Fixture {
  Image image;
  MapMetadata meta;
  /// Detector annotation file content.
  json annotation;
};

// ---------------------------------------------------------------------------
// Drawing

namespace detail {

/// 5x7 glyphs, one byte per row, bit 4 = leftmost column.
inline const std::array<std::uint8_t, 7>* glyph(char c) {
  static const std::map<char, std::array<std::uint8_t, 7>> kFont = {
      {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E}},
      {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
      {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
      {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
      {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
      {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}}, {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
      {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}}, {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {' ', {0, 0, 0, 0, 0, 0, 0}},                      {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
      {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}}, {',', {0, 0, 0, 0, 0x0C, 0x04, 0x08}},
      {'.', {0, 0, 0, 0, 0, 0x0C, 0x0C}},                {':', {0, 0x0C, 0x0C, 0, 0x0C, 0x0C, 0}},
      {'-', {0, 0, 0, 0x1F, 0, 0, 0}},                   {'\'', {0x0C, 0x04, 0x08, 0, 0, 0, 0}},
      {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}}, {'?', {0x0E, 0x11, 0x01, 0x02, 0x04, 0, 0x04}},
      {'#', {0x1F, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1F}},
  };
  if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  auto it = kFont.find(c);
  return it == kFont.end() ? &kFont.at('#') : &it->second;
}

/// Text in the 5x7 font, clipped to `clip`. Multi-byte UTF-8 sequences draw as
/// one placeholder glyph each.
inline void draw_text(Image& img, int x, int y, std::string_view text, int size, Rgb ink, const BBox& clip) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto byte = static_cast<unsigned char>(text[i]);
    if ((byte & 0xC0) == 0x80) continue;
    const auto& g = *glyph(byte < 0x80 ? static_cast<char>(byte) : '#');
    for (int r = 0; r < 7; ++r)
      for (int c = 0; c < 5; ++c)
        if (g[static_cast<std::size_t>(r)] & (0x10 >> c))
          if (auto px = intersection({x + c * size, y + r * size, x + (c + 1) * size, y + (r + 1) * size}, clip))
            img.fill_rect(*px, ink);
    x += 6 * size;
  }
}

inline void draw_line(Image& img, int x0, int y0, int x1, int y1, Rgb ink) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    if (x0 >= 0 && y0 >= 0 && x0 < img.width() && y0 < img.height()) img.set(x0, y0, ink);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) err += dy, x0 += sx;
    if (e2 <= dx) err += dx, y0 += sy;
  }
}

inline BBox inset(const BBox& b, int d) { return {b.x_min + d, b.y_min + d, b.x_max - d, b.y_max - d}; }

inline constexpr Rgb kInk{0, 0, 0};
inline constexpr Rgb kFrameInk{64, 64, 64};
inline constexpr Rgb kPaper{255, 255, 255};

inline std::map<ComponentKind, BBox> default_layout(int w, int h) {
  const double sx = static_cast<double>(w) / kFixtureDefaultWidth;
  const double sy = static_cast<double>(h) / kFixtureDefaultHeight;
  auto box = [&](int x0, int y0, int x1, int y1) {
    return BBox{static_cast<int>(std::lround(x0 * sx)), static_cast<int>(std::lround(y0 * sy)),
                static_cast<int>(std::lround(x1 * sx)), static_cast<int>(std::lround(y1 * sy))};
  };
  return {{ComponentKind::title, box(24, 12, 1000, 64)},
          {ComponentKind::main_map, box(24, 80, 680, 560)},
          {ComponentKind::scale, box(24, 572, 360, 612)},
          {ComponentKind::cross_section, box(24, 624, 680, 752)},
          {ComponentKind::legend, box(700, 80, 1000, 384)},
          {ComponentKind::index_map, box(700, 400, 1000, 560)},
          {ComponentKind::stratigraphic_column, box(700, 572, 1000, 752)}};
}

inline std::string capitalized(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

inline std::vector<FixtureUnit> draw_legend(const FixtureSpec& spec, Rng& rng) {
  if (spec.unit_count < 1 || spec.unit_count > 12)
    throw SpecError(fmt::format("unit_count {} outside 1..12", spec.unit_count));
  const auto& rows = default_lithology_table(spec.language).rows();
  const auto& ages = default_age_table();
  std::vector<std::size_t> picks(rows.size());
  for (std::size_t i = 0; i < picks.size(); ++i) picks[i] = i;
  rng.shuffle(picks);
  std::vector<FixtureUnit> out;
  for (std::size_t i = 0; out.size() < static_cast<std::size_t>(spec.unit_count) && i < picks.size(); ++i) {
    const auto& row = rows[picks[i]];
    if (row.lithology.find('(') != std::string::npos) continue;
    const auto& a = ages[rng.below(ages.size())];
    out.push_back({capitalized(row.lithology), std::nullopt, a.epoch.empty() ? a.period : a.epoch});
  }
  return out;
}

/// Colours at least 48 apart from each other and from paper, ink and frame.
inline std::vector<Rgb> draw_palette(std::size_t n, const std::vector<std::optional<Rgb>>& fixed, Rng& rng) {
  std::vector<Rgb> taken = {kInk, kPaper, kFrameInk};
  std::vector<Rgb> out(n);
  for (std::size_t i = 0; i < n; ++i)
    if (fixed[i]) taken.push_back(*fixed[i]);
  for (std::size_t i = 0; i < n; ++i) {
    if (fixed[i]) {
      out[i] = *fixed[i];
      continue;
    }
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw SpecError("cannot place a separable legend palette");
      const Rgb c{static_cast<std::uint8_t>(rng.between(30, 235)), static_cast<std::uint8_t>(rng.between(30, 235)),
                  static_cast<std::uint8_t>(rng.between(30, 235))};
      if (std::all_of(taken.begin(), taken.end(), [&](Rgb t) { return color_distance(c, t) >= 48; })) {
        out[i] = c;
        taken.push_back(c);
        break;
      }
    }
  }
  return out;
}

/// Pairwise-distinct fractions of at least 0.03 on a 0.001 grid summing to 1.
inline std::vector<double> draw_fractions(std::size_t n, Rng& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<double> w(n);
    double total = 0;
    for (auto& x : w) total += (x = rng.uniform(1.0, 6.0));
    std::vector<int> milli(n);
    int used = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) used += (milli[i] = static_cast<int>(std::lround(1000 * w[i] / total)));
    milli[n - 1] = 1000 - used;
    std::vector<int> sorted = milli;
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() < 30 || std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) continue;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = milli[i] / 1000.0;
    return out;
  }
  throw SpecError("cannot draw distinct area fractions");
}

/// Rocks fill `area` in wavy bands whose pixel counts follow `fractions`.
/// Band boundaries are level sets of y/h + s(x); each threshold is found by
/// bisection on the exact pixel count.
inline void fill_rocks(Image& img, const BBox& area, const std::vector<Rgb>& colors, const std::vector<double>& fractions,
                       const std::vector<std::size_t>& order, Rng& rng) {
  const int w = area.width(), h = area.height();
  const double p1 = rng.uniform(0, 6.283), p2 = rng.uniform(0, 6.283);
  const double a1 = rng.uniform(0.05, 0.12), a2 = rng.uniform(0.01, 0.04);
  std::vector<double> s(static_cast<std::size_t>(w));
  for (int x = 0; x < w; ++x) {
    const double u = (x + 0.5) / w;
    s[static_cast<std::size_t>(x)] = a1 * std::sin(6.283185307 * 1.3 * u + p1) + a2 * std::sin(6.283185307 * 4.1 * u + p2);
  }
  auto rows_below = [&](double t, int x) {
    const double v = std::ceil((t - s[static_cast<std::size_t>(x)]) * h - 0.5);
    return static_cast<int>(std::clamp(v, 0.0, static_cast<double>(h)));
  };
  auto count = [&](double t) {
    std::int64_t n = 0;
    for (int x = 0; x < w; ++x) n += rows_below(t, x);
    return n;
  };
  const std::int64_t total = std::int64_t{w} * h;
  std::vector<double> thresholds;
  double cum = 0;
  for (std::size_t k = 0; k + 1 < order.size(); ++k) {
    cum += fractions[order[k]];
    const auto target = static_cast<std::int64_t>(std::llround(cum * static_cast<double>(total)));
    double lo = -1.0, hi = 2.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (count(mid) < target ? lo : hi) = mid;
    }
    thresholds.push_back(hi);
  }
  thresholds.push_back(3.0);
  for (int x = 0; x < w; ++x) {
    int y = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const int end = k + 1 == order.size() ? h : std::max(y, rows_below(thresholds[k], x));
      for (; y < end; ++y) img.set(area.x_min + x, area.y_min + y, colors[order[k]]);
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Fixture synthesis

inline std::vector<std::string> fixture_layout_problems(const std::map<ComponentKind, BBox>& layout, int w, int h) {
  std::vector<std::string> out;
  const BBox image{0, 0, w, h};
  for (auto it = layout.begin(); it != layout.end(); ++it) {
    const auto& [k, b] = *it;
    if (!b.valid() || b.width() < 24 || b.height() < 16)
      out.push_back(fmt::format("{} box {} too small", to_string(k), b.to_string()));
    else if (!image.contains(b))
      out.push_back(fmt::format("{} box {} outside {}x{}", to_string(k), b.to_string(), w, h));
    for (auto jt = std::next(it); jt != layout.end(); ++jt)
      if (intersection_area(b, jt->second) > 0)
        out.push_back(fmt::format("{} overlaps {}", to_string(k), to_string(jt->first)));
  }
  return out;
}

inline Fixture synth_fixture(const FixtureSpec& spec) {
  if (spec.width < 64 || spec.height < 48 || spec.width > kFixtureMaxEdge || spec.height > kFixtureMaxEdge)
    throw SpecError(fmt::format("image size {}x{} outside 64x48..{}x{}", spec.width, spec.height, kFixtureMaxEdge,
                                kFixtureMaxEdge));
  auto rng = Rng::keyed(fmt::format("fixture|{}|{}", spec.seed, spec.map_id));

  std::vector<ComponentKind> include = spec.include;
  if (include.empty()) include.assign(kNamedComponents.begin(), kNamedComponents.end());
  if (std::find(include.begin(), include.end(), ComponentKind::main_map) == include.end() ||
      std::find(include.begin(), include.end(), ComponentKind::legend) == include.end())
    throw SpecError("a fixture needs a main map and a legend");
  auto layout = detail::default_layout(spec.width, spec.height);
  for (const auto& [k, b] : spec.layout) layout[k] = b;
  std::erase_if(layout, [&](const auto& kv) {
    return std::find(include.begin(), include.end(), kv.first) == include.end();
  });
  if (auto problems = fixture_layout_problems(layout, spec.width, spec.height); !problems.empty())
    throw SpecError(fmt::format("layout overflow: {}", problems.front()));

  auto legend = spec.legend.empty() ? detail::draw_legend(spec, rng) : spec.legend;
  const std::size_t n = legend.size();
  if (n == 0) throw SpecError("empty legend");
  std::set<std::string> names;
  for (const auto& u : legend)
    if (u.rock_name.empty() || !names.insert(u.rock_name).second)
      throw SpecError(fmt::format("legend rock name '{}' empty or repeated", u.rock_name));
  std::vector<std::optional<Rgb>> fixed;
  for (const auto& u : legend) fixed.push_back(u.color);
  const auto colors = detail::draw_palette(n, fixed, rng);
  auto fractions = spec.area_fractions.empty() ? detail::draw_fractions(n, rng) : spec.area_fractions;
  if (fractions.size() != n) throw SpecError("area_fractions must match the legend length");
  double total = 0;
  for (double f : fractions) total += f;
  if (std::abs(total - 1.0) > 1e-9) throw SpecError(fmt::format("area fractions sum to {}", total));
  FaultGrid faults{};
  if (spec.faults) faults = *spec.faults;
  else {
    bool any = false, none = true;
    while (!any || !none) {
      any = false, none = false;
      for (auto& row : faults)
        for (auto& cell : row) {
          cell = rng.below(5) < 2;
          (cell ? any : none) = true;
        }
    }
  }

  const BBox legend_box = layout.at(ComponentKind::legend);
  const int pad = std::max(4, legend_box.height() / 40);
  const int header = 7 * std::max(1, legend_box.height() / 150) + 2 * pad;
  const int row_h = (legend_box.height() - header - pad) / static_cast<int>(n);
  if (row_h < 10) throw SpecError(fmt::format("layout overflow: {} legend units in a {} px legend", n, legend_box.height()));

  Image img(spec.width, spec.height, detail::kPaper);
  MapMetadata meta;
  meta.map_id = spec.map_id;
  meta.source = "synthetic";
  meta.language = spec.language;
  meta.sheet_name = spec.sheet_name;
  meta.scale = canonical_scale(spec.scale);
  meta.lonlat = spec.lonlat;
  meta.neighbors = spec.neighbors;
  meta.fault_grid = faults;

  // Legend units, top to bottom.
  const int text_size = std::max(1, (row_h - 6) / 9);
  const int swatch_w = std::max(16, legend_box.width() / 6);
  for (std::size_t i = 0; i < n; ++i) {
    const int y0 = legend_box.y_min + header + static_cast<int>(i) * row_h;
    LegendUnit u;
    u.color_bbox = {legend_box.x_min + pad, y0 + 2, legend_box.x_min + pad + swatch_w, y0 + row_h - 2};
    u.text_bbox = {u.color_bbox.x_max + pad, y0 + 2, legend_box.x_max - pad, y0 + row_h - 2};
    u.rock_name = legend[i].rock_name;
    u.color = colors[i];
    if (auto m = default_lithology_table(spec.language).lookup(legend[i].rock_name); m && m->exact)
      u.lithology = m->lithology;
    if (!legend[i].age.empty()) u.stratigraphic_age = legend[i].age;
    img.fill_rect(u.color_bbox, u.color);
    img.stroke_rect(u.color_bbox, detail::kInk);
    const auto text = compose_legend_text(u);
    const int fit = u.text_bbox.width() / (6 * static_cast<int>(std::max<std::size_t>(1, text.size())));
    const int size = std::max(1, std::min(text_size, fit));
    detail::draw_text(img, u.text_bbox.x_min, u.text_bbox.y_min + (u.text_bbox.height() - 7 * size) / 2, text, size,
                      detail::kInk, u.text_bbox);
    meta.legend_units.push_back(std::move(u));
  }
  for (std::size_t i = 0; i < n; ++i) meta.rock_areas[legend[i].rock_name] = fractions[i];

  // Components.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  for (const auto& [kind, box] : layout) {
    Component c{kind, box, std::round(rng.uniform(0.85, 0.99) * 100) / 100, json::object()};
    const BBox inner = detail::inset(box, kFixtureFrame);
    const int label = std::max(1, box.height() / 120);
    switch (kind) {
      case ComponentKind::title: {
        const int size = std::max(1, (box.height() - 8) / 8);
        detail::draw_text(img, inner.x_min + 8, inner.y_min + (inner.height() - 7 * size) / 2, spec.sheet_name, size,
                          detail::kInk, inner);
        c.info = {{"sheet_name", spec.sheet_name}, {"authors", "Synthetic Survey"}};
        break;
      }
      case ComponentKind::scale: {
        const int size = std::max(1, (box.height() - 8) / 16);
        detail::draw_text(img, inner.x_min + 6, inner.y_min + 4, "SCALE " + *meta.scale, size, detail::kInk, inner);
        const int bar_y = inner.y_max - std::max(4, inner.height() / 4);
        img.fill_rect({inner.x_min + 6, bar_y, inner.x_min + inner.width() / 2, bar_y + 3}, detail::kInk);
        c.info = {{"scale", *meta.scale}};
        break;
      }
      case ComponentKind::main_map: {
        detail::fill_rocks(img, inner, colors, fractions, order, rng);
        const double cw = box.width() / 3.0, ch = box.height() / 3.0;
        for (int r = 0; r < 3; ++r)
          for (int col = 0; col < 3; ++col) {
            if (!faults[r][col]) continue;
            const int x0 = box.x_min + static_cast<int>(col * cw + cw * 0.2);
            const int x1 = box.x_min + static_cast<int>(col * cw + cw * 0.8);
            const int y0 = box.y_min + static_cast<int>(r * ch + ch * rng.uniform(0.2, 0.8));
            const int y1 = box.y_min + static_cast<int>(r * ch + ch * rng.uniform(0.2, 0.8));
            detail::draw_line(img, x0, y0, x1, y1, detail::kInk);
          }
        c.info = {{"west", spec.lonlat.west}, {"east", spec.lonlat.east},
                  {"south", spec.lonlat.south}, {"north", spec.lonlat.north}};
        break;
      }
      case ComponentKind::legend:
        detail::draw_text(img, inner.x_min + pad, inner.y_min + pad, "LEGEND", label, detail::kInk, inner);
        break;
      case ComponentKind::index_map: {
        detail::draw_text(img, inner.x_min + 4, inner.y_min + 4, "INDEX MAP", label, detail::kInk, inner);
        const int top = inner.y_min + 7 * label + 8;
        const int gw = (inner.width() - 8) / 3, gh = (inner.y_max - top - 4) / 3;
        for (int r = 0; r < 3; ++r)
          for (int col = 0; col < 3; ++col) {
            const BBox cell{inner.x_min + 4 + col * gw, top + r * gh, inner.x_min + 4 + (col + 1) * gw, top + (r + 1) * gh};
            if (r == 1 && col == 1) img.fill_rect(cell, {200, 200, 200});
            img.stroke_rect(cell, detail::kFrameInk);
          }
        c.info = {{"neighbors", spec.neighbors}};
        break;
      }
      case ComponentKind::cross_section: {
        detail::draw_text(img, inner.x_min + 4, inner.y_min + 4, "A-A'", label, detail::kInk, inner);
        const int top = inner.y_min + 7 * label + 8;
        const int band = std::max(1, (inner.y_max - top) / static_cast<int>(n));
        for (std::size_t i = 0; i < n; ++i)
          img.fill_rect({inner.x_min + 4, top + static_cast<int>(i) * band, inner.x_max - 4,
                         std::min(inner.y_max, top + static_cast<int>(i + 1) * band)},
                        colors[order[i]]);
        c.info = {{"section_line", "A-A'"}};
        break;
      }
      case ComponentKind::stratigraphic_column: {
        const int band = std::max(1, (inner.height() - 8) / static_cast<int>(n));
        for (std::size_t i = 0; i < n; ++i)
          img.fill_rect({inner.x_min + 8, inner.y_min + 4 + static_cast<int>(i) * band, inner.x_min + inner.width() / 3,
                         inner.y_min + 4 + static_cast<int>(i + 1) * band},
                        colors[i]);
        c.info = {{"unit_count", n}};
        break;
      }
      default:
        break;
    }
    img.stroke_rect(box, detail::kFrameInk, kFixtureFrame);
    meta.components.push_back(std::move(c));
  }
  std::sort(meta.components.begin(), meta.components.end(),
            [](const Component& a, const Component& b) { return a.kind < b.kind; });

  if (auto problems = validate_metadata(meta, ImageSize{spec.width, spec.height}); !problems.empty())
    throw SpecError(fmt::format("fixture {} inconsistent: {}", spec.map_id, problems.front()));

  json comps = json::array();
  for (const auto& c : meta.components) comps.push_back(Detection{std::string(to_string(c.kind)), c.bbox, c.confidence});
  if (const auto* t = meta.find(ComponentKind::title))
    comps.push_back(Detection{"title", t->bbox.translated(2, 1), 0.5});
  json units = json::array();
  for (const auto& u : meta.legend_units) {
    units.push_back(Detection{std::string(kTextUnit), u.text_bbox, 0.9});
    units.push_back(Detection{std::string(kColorUnit), u.color_bbox, 0.95});
  }
  json annotation = {{"map_id", spec.map_id}, {"components", comps}, {"legend_units", units}};
  return {std::move(img), std::move(meta), std::move(annotation)};
}

// ---------------------------------------------------------------------------
// Corpus

struct CorpusSpec {
  int maps = 10;
  std::uint64_t seed = 7;
  int width = kFixtureDefaultWidth;
  int height = kFixtureDefaultHeight;
  /// Every n-th map uses the Chinese lithology table; 0 disables.
  int chinese_every = 5;
};

namespace detail {
inline std::string sheet_name_at(int row, int col) {
  static constexpr std::array<std::string_view, 12> kFirst = {"Cedar", "Ash",   "Bell",  "Crow",  "Dover", "Elk",
                                                              "Fox",   "Glen",  "Hart",  "Iron",  "Juniper", "Kings"};
  static constexpr std::array<std::string_view, 10> kSecond = {"Ridge", "Creek", "Hollow", "Knob",  "Gap",
                                                               "Falls", "Mill",  "Spring", "Bluff", "Valley"};
  const int i = (row + 1) * 17 + (col + 1);
  return fmt::format("{} {}", kFirst[static_cast<std::size_t>(i % 12)], kSecond[static_cast<std::size_t>((i / 12) % 10)]);
}
}  // namespace detail

inline constexpr double kSheetWidthDeg = 0.5;
inline constexpr double kSheetHeightDeg = 0.25;
inline constexpr double kCorpusWest = -84.0;
inline constexpr double kCorpusNorth = 36.5;

/// Sheets tile a grid starting at the north-west corner; neighbours are the
/// surrounding grid positions.
inline std::vector<FixtureSpec> corpus_specs(const CorpusSpec& c) {
  if (c.maps < 1) throw SpecError("corpus needs at least one map");
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(c.maps))));
  std::vector<FixtureSpec> out;
  for (int i = 0; i < c.maps; ++i) {
    const int row = i / cols, col = i % cols;
    FixtureSpec s;
    s.map_id = fmt::format("map-{:03d}", i);
    s.seed = c.seed * 1000003 + static_cast<std::uint64_t>(i);
    s.width = c.width;
    s.height = c.height;
    s.language = c.chinese_every > 0 && i % c.chinese_every == c.chinese_every - 1 ? Language::Chinese : Language::English;
    s.sheet_name = detail::sheet_name_at(row, col);
    s.scale = i % 3 == 0 ? "1:250000" : i % 3 == 1 ? "1:100000" : "1:24000";
    const double west = kCorpusWest + col * kSheetWidthDeg;
    const double north = kCorpusNorth - row * kSheetHeightDeg;
    s.lonlat = {west, west + kSheetWidthDeg, north - kSheetHeightDeg, north};
    s.neighbors.clear();
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc)
        if (dr || dc) s.neighbors.insert(detail::sheet_name_at(row + dr, col + dc));
    s.unit_count = 5 + i % 4;
    out.push_back(std::move(s));
  }
  return out;
}

inline LonLatRange corpus_extent(const std::vector<FixtureSpec>& specs) {
  LonLatRange r = specs.front().lonlat;
  for (const auto& s : specs) {
    r.west = std::min(r.west, s.lonlat.west);
    r.east = std::max(r.east, s.lonlat.east);
    r.south = std::min(r.south, s.lonlat.south);
    r.north = std::max(r.north, s.lonlat.north);
  }
  return r;
}

/// Quake catalogue, fault traces and population / land-cover rasters over the
/// corpus extent plus a half-degree margin.
inline void write_snapshots(const std::filesystem::path& dir, const LonLatRange& extent, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  auto rng = Rng::keyed(fmt::format("snapshots|{}", seed));
  const LonLatRange box{extent.west - 0.5, extent.east + 0.5, extent.south - 0.5, extent.north + 0.5};
  auto round_to = [](double v, double q) { return std::round(v / q) / std::round(1.0 / q); };

  std::vector<QuakeRecord> quakes;
  const int nq = static_cast<int>(std::lround(box.area() * 40));
  for (int i = 0; i < nq; ++i) {
    QuakeRecord q;
    q.lon = round_to(rng.uniform(box.west, box.east), 1e-4);
    q.lat = round_to(rng.uniform(box.south, box.north), 1e-4);
    q.magnitude = round_to(1.0 + 5.5 * std::pow(rng.unit(), 2.0), 0.1);
    q.year = rng.between(1940, 2024);
    if (rng.below(4)) q.depth_km = round_to(rng.uniform(1, 25), 0.1);
    quakes.push_back(q);
  }
  write_file(dir / "quakes.csv", format_quake_csv(quakes));

  json faults = json::array();
  const int nf = std::max(2, static_cast<int>(std::lround(box.area() * 0.6)));
  for (int i = 0; i < nf; ++i) {
    FaultRecord f;
    f.name = fmt::format("{} Fault", detail::sheet_name_at(rng.between(0, 9), rng.between(0, 9)).substr(0, 20));
    double lon = rng.uniform(box.west, box.east), lat = rng.uniform(box.south, box.north);
    const double heading = rng.uniform(0, 3.14159);
    for (int k = 0; k < 4; ++k) {
      f.polyline.push_back({round_to(lon, 1e-4), round_to(lat, 1e-4)});
      lon += 0.2 * std::cos(heading) + rng.uniform(-0.03, 0.03);
      lat += 0.2 * std::sin(heading) + rng.uniform(-0.03, 0.03);
    }
    f.slip_type = rng.below(2) ? "strike-slip" : "reverse";
    faults.push_back(f);
  }
  write_file(dir / "faults.json", json{{"faults", faults}}.dump(2) + "\n");

  const double cell = 0.05;
  RasterHeader h{box.west, box.north, cell, static_cast<int>(std::lround((box.east - box.west) / cell)),
                 static_cast<int>(std::lround((box.north - box.south) / cell)), "float32"};
  Raster pop{h, {}};
  Raster cover{h, {}};
  cover.header.dtype = "uint8";
  static constexpr std::array<int, 8> kCover = {10, 20, 30, 40, 50, 60, 80, 90};
  for (int i = 0; i < h.width * h.height; ++i) {
    pop.values.push_back(std::round(rng.uniform(0, 400) * std::pow(rng.unit(), 2.0)));
    cover.values.push_back(kCover[rng.below(kCover.size())]);
  }
  write_file(dir / "population.json", json(pop.header).dump(2) + "\n");
  write_file(dir / "population.bin", encode_raster(pop));
  write_file(dir / "landcover.json", json(cover.header).dump(2) + "\n");
  write_file(dir / "landcover.bin", encode_raster(cover));
}

/// Corpus layout: corpus.json, images/, annotations/, metadata/, fixtures/,
/// snapshots/. Returns the ground-truth metadata in map order.
inline std::vector<MapMetadata> write_corpus(const std::filesystem::path& dir, const CorpusSpec& c) {
  namespace fs = std::filesystem;
  for (auto sub : {"images", "annotations", "metadata", "fixtures", "snapshots"}) fs::create_directories(dir / sub);
  const auto specs = corpus_specs(c);
  std::vector<MapMetadata> metas;
  json docs = json::array();
  for (const auto& s : specs) {
    const auto f = synth_fixture(s);
    MapDocument doc{s.map_id, "synthetic", s.language, "images/" + s.map_id + ".png"};
    save_image(dir / doc.image, f.image);
    write_file(dir / "annotations" / (s.map_id + ".json"), f.annotation.dump(2) + "\n");
    write_file(dir / "metadata" / (s.map_id + ".json"), json(f.meta).dump(2) + "\n");
    write_file(dir / "fixtures" / (s.map_id + ".json"), json(s).dump(2) + "\n");
    docs.push_back(doc);
    metas.push_back(f.meta);
  }
  write_file(dir / "corpus.json", json{{"maps", docs}}.dump(2) + "\n");
  write_snapshots(dir / "snapshots", corpus_extent(specs), c.seed);
  return metas;
}

}  // namespace geomap
