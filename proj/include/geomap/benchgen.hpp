#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "geomap/dki.hpp"
#include "geomap/error.hpp"
#include "geomap/lithology.hpp"
#include "geomap/model.hpp"
#include "geomap/prompts.hpp"
#include "geomap/templates.hpp"
#include "geomap/text.hpp"
#include "geomap/validate.hpp"

namespace geomap {

/// Deterministic generator seeded from a string key. Draws avoid the
/// implementation-defined std distributions so streams match across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  static Rng keyed(std::string_view key) { return Rng(fnv1a(key)); }

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, n).
  std::size_t below(std::size_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do v = engine_();
    while (v >= limit);
    return static_cast<std::size_t>(v % n);
  }
  /// Uniform in [0, 1).
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
  int between(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::size_t>(hi - lo + 1))); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[below(v.size())];
  }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Ground-truth helpers

inline constexpr std::array<std::string_view, 9> kDirections = {
    "North", "Northeast", "East", "Southeast", "South", "Southwest", "West", "Northwest", "Center"};

inline std::pair<int, int> direction_cell(std::string_view direction) {
  static constexpr std::array<std::pair<int, int>, 9> kCells = {
      {{0, 1}, {0, 2}, {1, 2}, {2, 2}, {2, 1}, {2, 0}, {1, 0}, {0, 0}, {1, 1}}};
  for (std::size_t i = 0; i < kDirections.size(); ++i)
    if (ascii_lower(kDirections[i]) == ascii_lower(trim(direction))) return kCells[i];
  throw DefinitionError(fmt::format("unknown direction '{}'", direction));
}

inline std::string gt_fault_in_cell(const FaultGrid& grid, std::string_view direction) {
  const auto [row, col] = direction_cell(direction);
  return grid[row][col] ? "Yes" : "No";
}

/// Label of the choice whose rock has descending area rank k (1-based).
inline std::string gt_area_rank(const std::map<std::string, double>& rock_areas, int k,
                                std::span<const Choice> choices) {
  if (choices.empty() || k < 1 || k > static_cast<int>(choices.size()))
    throw DefinitionError(fmt::format("rank {} outside 1..{}", k, choices.size()));
  std::vector<std::pair<double, const Choice*>> ranked;
  for (const auto& c : choices) {
    auto it = rock_areas.find(c.text);
    if (it == rock_areas.end()) throw LookupError(fmt::format("rock '{}' has no area", c.text));
    ranked.emplace_back(it->second, &c);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 1; i < ranked.size(); ++i)
    if (ranked[i].first == ranked[i - 1].first)
      throw DefinitionError(fmt::format("area tie between '{}' and '{}'", ranked[i - 1].second->text,
                                        ranked[i].second->text));
  return ranked[static_cast<std::size_t>(k - 1)].second->label;
}

/// Level-1 classes in first-appearance order of the table.
inline std::vector<std::string> lithology_classes(const LithologyTable& table) {
  std::vector<std::string> out;
  for (const auto& r : table.rows())
    if (std::find(out.begin(), out.end(), r.cls) == out.end()) out.push_back(r.cls);
  return out;
}

/// Class with the largest summed area; unresolvable rocks are excluded.
inline std::optional<std::string> gt_lithology_majority(const std::map<std::string, double>& rock_areas,
                                                        const std::vector<LegendUnit>& units,
                                                        const LithologyTable& table) {
  const auto classes = lithology_classes(table);
  std::vector<double> sum(classes.size(), 0.0);
  bool any = false;
  for (const auto& [rock, area] : rock_areas) {
    std::optional<LithologyMatch> m;
    for (const auto& u : units)
      if (u.rock_name == rock && u.lithology && (m = table.lookup(*u.lithology))) break;
    if (!m) m = table.lookup(rock);
    if (!m) continue;
    const auto at = std::find(classes.begin(), classes.end(), m->cls) - classes.begin();
    sum[static_cast<std::size_t>(at)] += area;
    any = true;
  }
  if (!any) return std::nullopt;
  std::size_t best = 0;
  for (std::size_t i = 1; i < sum.size(); ++i)
    if (sum[i] > sum[best]) best = i;
  return classes[best];
}

enum class ColorQuery { rock_to_color, color_to_rock };

struct ColorReferring {
  std::string answer;
  std::size_t unit = 0;
  std::vector<std::string> distractors;
};

/// Answer for a colour-referring question. Distractors are the other units in
/// legend order, skipping repeats of the answer; the caller samples from them.
inline ColorReferring gt_color_referring(const std::vector<LegendUnit>& units, ColorQuery direction,
                                         std::string_view query) {
  ColorReferring out;
  if (direction == ColorQuery::color_to_rock) {
    const Rgb q = parse_hex(query);
    std::optional<std::size_t> best;
    double best_d = 0;
    for (std::size_t i = 0; i < units.size(); ++i) {
      if (!units[i].rock_name) continue;
      const double d = color_distance(units[i].color, q);
      if (!best || d < best_d) best = i, best_d = d;
    }
    if (!best) throw LookupError("no legend unit with a rock name");
    out.unit = *best;
    out.answer = *units[*best].rock_name;
    for (std::size_t i = 0; i < units.size(); ++i)
      if (i != *best && units[i].rock_name && *units[i].rock_name != out.answer)
        out.distractors.push_back(*units[i].rock_name);
  } else {
    std::optional<std::size_t> hit;
    for (std::size_t i = 0; i < units.size() && !hit; ++i)
      if (units[i].rock_name && normalize_text(*units[i].rock_name) == normalize_text(query)) hit = i;
    if (!hit) throw LookupError(fmt::format("no legend unit for rock '{}'", query));
    out.unit = *hit;
    out.answer = to_hex(units[*hit].color);
    for (std::size_t i = 0; i < units.size(); ++i) {
      const auto hex = to_hex(units[i].color);
      if (i != *hit && hex != out.answer) out.distractors.push_back(hex);
    }
  }
  return out;
}

struct SheetCandidate {
  std::string name;
  LonLatRange range;
};

/// Index of the only candidate containing the point (closed ranges); nullopt
/// when zero or several contain it.
inline std::optional<std::size_t> gt_lonlat_localization(double lon, double lat,
                                                         std::span<const SheetCandidate> candidates) {
  std::optional<std::size_t> hit;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!candidates[i].range.contains(lon, lat)) continue;
    if (hit) return std::nullopt;
    hit = i;
  }
  return hit;
}

// ---------------------------------------------------------------------------
// Reference essays

inline const std::set<std::string>& essay_kinds() {
  static const std::set<std::string> k = {"historical_earthquakes", "active_faults", "population_density",
                                          "land_cover"};
  return k;
}

inline std::string reference_essay(const MapMetadata& meta, const KnowledgePacket& packet) {
  const std::string name = meta.sheet_name.value_or(meta.map_id);
  std::size_t quakes = 0, faults = 0;
  std::optional<double> max_mag;
  std::optional<double> population;
  std::vector<std::string> fault_names;
  for (const auto& e : packet.entries) {
    if (e.kind == "historical_earthquakes") {
      quakes = e.payload.value("count", std::size_t{0});
      if (e.payload.contains("max_magnitude") && e.payload["max_magnitude"].is_number())
        max_mag = e.payload["max_magnitude"].get<double>();
    } else if (e.kind == "active_faults") {
      faults = e.payload.value("count", std::size_t{0});
      for (const auto& f : e.payload.value("faults", json::array()))
        if (f.contains("name")) fault_names.push_back(f["name"].get<std::string>());
    } else if (e.kind == "population_density" && e.payload.contains("sum")) {
      population = e.payload["sum"].get<double>();
    }
  }
  const double hazard = static_cast<double>(quakes) + 5.0 * static_cast<double>(faults) +
                        (max_mag ? 4.0 * std::max(0.0, *max_mag - 4.0) : 0.0);
  const std::string_view level = hazard >= 20 ? "high" : hazard >= 6 ? "moderate" : "low";
  std::string s = fmt::format("Seismic risk assessment for {}.\n", name);
  s += fmt::format("Possibility: {} earthquakes above magnitude 2.5 have been recorded inside the map area since 1970",
                   quakes);
  if (max_mag) s += fmt::format(", the largest of magnitude {}", format_number(*max_mag));
  s += ". ";
  if (faults == 0) s += "No mapped active fault crosses the area.";
  else s += fmt::format("{} active faults cross the area ({}).", faults, fmt::join(fault_names, ", "));
  s += "\nSocietal impact: ";
  if (population) s += fmt::format("about {} people live within the map area.", static_cast<long long>(std::llround(*population)));
  else s += "population data are unavailable for the map area.";
  s += fmt::format("\nConclusion: the seismic risk of this area is {}.", level);
  return s;
}

using EssaySource = std::function<std::optional<std::string>(const MapMetadata&)>;

/// Essays built from the expert group consulted over the snapshots.
inline EssaySource knowledge_essay_source(const ExpertRegistry& registry, const ToolPool& tools) {
  return [&registry, &tools](const MapMetadata& meta) -> std::optional<std::string> {
    if (!meta.lonlat) return std::nullopt;
    const auto packet = consult_all(registry, essay_kinds(), meta, tools);
    if (packet.empty()) return std::nullopt;
    return reference_essay(meta, packet);
  };
}

// ---------------------------------------------------------------------------
// Generation

inline constexpr int kResampleAttempts = 32;

struct GenConfig {
  std::uint64_t seed = 42;
  int per_task = 1;
  int distractors = 3;
};

struct GenContext {
  /// Other maps of the corpus, for localization distractors.
  const std::vector<MapMetadata>* corpus = nullptr;
  EssaySource essays;
};

struct GenResult {
  std::vector<BenchItem> items;
  /// Skipped tasks and resample events, one line each.
  std::vector<std::string> log;
};

namespace detail {

struct Draft {
  std::string question;
  std::optional<std::vector<Choice>> choices;
  AnswerValue gt;
};

/// Skip reason; resample requests ask for another attempt.
struct Skip {
  std::string reason;
  bool resample = false;
};

using Attempt = std::variant<Draft, Skip>;

inline std::string fill(const TaskTemplate& t, Rng& rng, prompts::Bindings b) {
  std::string q = prompts::render(rng.pick(t.phrasings), b);
  if (!t.answer_format.empty()) q += "\n" + t.answer_format;
  return q;
}

/// Four labelled choices with the answer at a random position.
inline std::pair<std::vector<Choice>, std::string> layout_choices(const std::string& answer,
                                                                   std::vector<std::string> others, Rng& rng) {
  others.insert(others.begin(), answer);
  rng.shuffle(others);
  std::vector<Choice> choices;
  std::string label;
  for (std::size_t i = 0; i < others.size(); ++i) {
    choices.push_back({std::string(kChoiceLabels[i]), others[i]});
    if (others[i] == answer) label = std::string(kChoiceLabels[i]);
  }
  return {choices, label};
}

template <typename T>
std::vector<T> sample(std::vector<T> pool, std::size_t n, Rng& rng) {
  rng.shuffle(pool);
  if (pool.size() > n) pool.resize(n);
  return pool;
}

inline std::string rank_word(int k) {
  static constexpr std::array<std::string_view, 4> kWords = {"first", "second", "third", "fourth"};
  return std::string(kWords[static_cast<std::size_t>(k - 1)]);
}

inline std::string coordinate(double v) { return format_number(std::round(v * 100.0) / 100.0); }

inline Attempt draft(const MapMetadata& m, Task task, const TaskTemplate& tt, const GenConfig& cfg,
                     const GenContext& ctx, Rng& rng) {
  const std::size_t nd = static_cast<std::size_t>(cfg.distractors);
  const auto& ti = info(task);
  if (ti.component) {
    const Component* c = m.find(*ti.component);
    if (!c) return Skip{fmt::format("no {} component", to_string(*ti.component))};
    prompts::Bindings b = {{"component", display_name(*ti.component)}};
    if (is_by_intention(task)) b.push_back({"intention", rng.pick(tt.intentions)});
    return Draft{fill(tt, rng, b), std::nullopt, c->bbox};
  }
  switch (task) {
    case Task::sheet_name:
      if (!m.sheet_name) return Skip{"no sheet name"};
      return Draft{fill(tt, rng, {}), std::nullopt, TextAnswer{*m.sheet_name}};
    case Task::scale:
      if (!m.scale) return Skip{"no scale"};
      return Draft{fill(tt, rng, {}), std::nullopt, TextAnswer{*m.scale}};
    case Task::lonlat:
      if (!m.lonlat) return Skip{"no lon-lat range"};
      return Draft{fill(tt, rng, {}), std::nullopt, *m.lonlat};
    case Task::index_map:
      if (!m.neighbors || m.neighbors->empty()) return Skip{"no neighbours"};
      return Draft{fill(tt, rng, {}), std::nullopt, NameSet{*m.neighbors}};
    case Task::color_by_rock: {
      std::vector<std::string> rocks;
      for (const auto& u : m.legend_units)
        if (u.rock_name) rocks.push_back(*u.rock_name);
      if (rocks.size() < nd + 1) return Skip{"fewer than 4 named legend units"};
      const auto rock = rng.pick(rocks);
      const auto gt = gt_color_referring(m.legend_units, ColorQuery::rock_to_color, rock);
      if (gt.distractors.size() < nd) return Skip{"fewer than 4 distinct legend colours"};
      auto [choices, label] = layout_choices(gt.answer, sample(gt.distractors, nd, rng), rng);
      return Draft{fill(tt, rng, {{"rock", rock}}), choices, ChoiceLabel{label}};
    }
    case Task::rock_by_color: {
      std::vector<std::size_t> named;
      for (std::size_t i = 0; i < m.legend_units.size(); ++i)
        if (m.legend_units[i].rock_name) named.push_back(i);
      if (named.size() < nd + 1) return Skip{"fewer than 4 named legend units"};
      const auto& target = m.legend_units[rng.pick(named)];
      std::vector<std::string> pool;
      for (auto i : named) {
        const auto& u = m.legend_units[i];
        if (*u.rock_name != *target.rock_name && color_distance(u.color, target.color) >= 32 &&
            std::find(pool.begin(), pool.end(), *u.rock_name) == pool.end())
          pool.push_back(*u.rock_name);
      }
      if (pool.size() < nd) return Skip{"fewer than 4 separable legend colours"};
      auto jitter = [&](std::uint8_t v) {
        return static_cast<std::uint8_t>(std::clamp(static_cast<int>(v) + rng.between(-4, 4), 0, 255));
      };
      const Rgb query{jitter(target.color.r), jitter(target.color.g), jitter(target.color.b)};
      const auto gt = gt_color_referring(m.legend_units, ColorQuery::color_to_rock, to_hex(query));
      if (gt.answer != *target.rock_name) return Skip{"query colour nearer another unit", true};
      auto [choices, label] = layout_choices(gt.answer, sample(pool, nd, rng), rng);
      return Draft{fill(tt, rng, {{"color", to_hex(query)}}), choices, ChoiceLabel{label}};
    }
    case Task::area_comparison: {
      std::vector<std::string> rocks;
      for (const auto& [r, a] : m.rock_areas) rocks.push_back(r);
      if (rocks.size() < nd + 1) return Skip{"fewer than 4 rocks with areas"};
      const auto picked = sample(rocks, nd + 1, rng);
      const int k = rng.between(1, static_cast<int>(nd) + 1);
      std::vector<Choice> choices;
      for (std::size_t i = 0; i < picked.size(); ++i) choices.push_back({std::string(kChoiceLabels[i]), picked[i]});
      try {
        const auto label = gt_area_rank(m.rock_areas, k, choices);
        return Draft{fill(tt, rng, {{"rank", rank_word(k)}}), choices, ChoiceLabel{label}};
      } catch (const DefinitionError& e) {
        return Skip{e.what(), true};
      }
    }
    case Task::fault_existence: {
      if (!m.fault_grid) return Skip{"no fault grid"};
      const std::string dir(kDirections[rng.below(kDirections.size())]);
      const auto answer = gt_fault_in_cell(*m.fault_grid, dir);
      std::vector<std::string> others = {"Yes", "No", "Not determinable from the map",
                                         "The grid is outside the map area"};
      others.erase(std::find(others.begin(), others.end(), answer));
      auto [choices, label] = layout_choices(answer, others, rng);
      return Draft{fill(tt, rng, {{"direction", dir}}), choices, ChoiceLabel{label}};
    }
    case Task::lithology_composition: {
      if (m.rock_areas.empty()) return Skip{"no rock areas"};
      const auto& table = default_lithology_table(m.language);
      const auto cls = gt_lithology_majority(m.rock_areas, m.legend_units, table);
      if (!cls) return Skip{"no rock resolvable to a lithology class"};
      auto others = lithology_classes(table);
      others.erase(std::find(others.begin(), others.end(), *cls));
      auto [choices, label] = layout_choices(*cls, sample(others, nd, rng), rng);
      return Draft{fill(tt, rng, {}), choices, ChoiceLabel{label}};
    }
    case Task::lonlat_localization: {
      if (!m.lonlat || !m.sheet_name) return Skip{"no lon-lat range or sheet name"};
      const auto& r = *m.lonlat;
      const double lon = std::round(rng.uniform(r.west, r.east) * 100.0) / 100.0;
      const double lat = std::round(rng.uniform(r.south, r.north) * 100.0) / 100.0;
      std::vector<SheetCandidate> pool;
      if (ctx.corpus)
        for (const auto& o : *ctx.corpus)
          if (o.map_id != m.map_id && o.lonlat && o.sheet_name && *o.sheet_name != *m.sheet_name &&
              std::none_of(pool.begin(), pool.end(), [&](const auto& c) { return c.name == *o.sheet_name; }))
            pool.push_back({*o.sheet_name, *o.lonlat});
      if (pool.size() < nd) return Skip{"fewer than 3 other sheets with ranges"};
      std::vector<SheetCandidate> cands = sample(pool, nd, rng);
      cands.push_back({*m.sheet_name, r});
      rng.shuffle(cands);
      const auto hit = gt_lonlat_localization(lon, lat, cands);
      if (!hit || cands[*hit].name != *m.sheet_name) return Skip{"point not inside exactly one candidate", true};
      std::vector<Choice> choices;
      for (std::size_t i = 0; i < cands.size(); ++i) choices.push_back({std::string(kChoiceLabels[i]), cands[i].name});
      return Draft{fill(tt, rng, {{"lon", coordinate(lon)}, {"lat", coordinate(lat)}}), choices,
                   ChoiceLabel{std::string(kChoiceLabels[*hit])}};
    }
    case Task::earthquake_risk: {
      if (!ctx.essays) return Skip{"no reference essay source"};
      auto essay = ctx.essays(m);
      if (!essay) return Skip{"no knowledge for a reference essay"};
      return Draft{fill(tt, rng, {}), std::nullopt, Essay{*essay}};
    }
    default:
      break;
  }
  return Skip{"unsupported task"};
}

}  // namespace detail

/// Items for every applicable task, `per_task` each, in task order.
inline GenResult generate(const MapMetadata& meta, const TemplateSet& templates, const GenConfig& cfg,
                          const GenContext& ctx = {}) {
  GenResult out;
  if (cfg.per_task < 1 || cfg.distractors != 3)
    throw DefinitionError("per_task must be positive and distractors must be 3");
  if (auto problems = validate_metadata(meta); !problems.empty())
    throw DefinitionError(fmt::format("metadata {} invalid: {}", meta.map_id, problems.front()));
  for (const auto& ti : kTasks) {
    const auto& tt = templates.at(ti.task);
    for (int k = 0; k < cfg.per_task; ++k) {
      auto rng = Rng::keyed(fmt::format("{}|{}|{}|{}", cfg.seed, meta.map_id, ti.name, k));
      std::optional<detail::Draft> got;
      std::string reason;
      for (int attempt = 0; attempt < kResampleAttempts && !got; ++attempt) {
        auto a = detail::draft(meta, ti.task, tt, cfg, ctx, rng);
        if (auto* d = std::get_if<detail::Draft>(&a)) {
          got = std::move(*d);
          break;
        }
        const auto& skip = std::get<detail::Skip>(a);
        reason = skip.reason;
        if (!skip.resample) break;
        out.log.push_back(fmt::format("{} {} #{}: resample ({})", meta.map_id, ti.name, k, skip.reason));
      }
      if (!got) {
        const auto line = fmt::format("{} {}: skipped ({})", meta.map_id, ti.name, reason);
        spdlog::info("{}", line);
        out.log.push_back(line);
        break;
      }
      BenchItem item{fmt::format("{}-{}-{}", meta.map_id, ti.name, k), meta.map_id, ti.ability, ti.task, ti.qtype,
                     std::move(got->question), std::move(got->choices), std::move(got->gt)};
      if (auto problems = validate_item(item); !problems.empty())
        throw DefinitionError(fmt::format("generated item {} invalid: {}", item.id, problems.front()));
      out.items.push_back(std::move(item));
    }
  }
  return out;
}

/// Generate over a corpus; each map sees the others as localization distractors.
inline GenResult generate_corpus(const std::vector<MapMetadata>& maps, const TemplateSet& templates,
                                 const GenConfig& cfg, EssaySource essays = {}) {
  GenResult all;
  GenContext ctx{&maps, std::move(essays)};
  for (const auto& m : maps) {
    auto r = generate(m, templates, cfg, ctx);
    for (auto& i : r.items) all.items.push_back(std::move(i));
    for (auto& l : r.log) all.log.push_back(std::move(l));
  }
  return all;
}

}  // namespace geomap
