#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "geomap/backend.hpp"
#include "geomap/detect.hpp"
#include "geomap/error.hpp"
#include "geomap/image.hpp"
#include "geomap/judge.hpp"
#include "geomap/lithology.hpp"
#include "geomap/model.hpp"
#include "geomap/parallel.hpp"
#include "geomap/prompts.hpp"
#include "geomap/reply.hpp"
#include "geomap/schema.hpp"
#include "geomap/validate.hpp"

namespace geomap {

/// Identity of a rasterized map.
struct MapDocument {
  std::string map_id;
  std::string source = "synthetic";
  Language language = Language::English;
  /// Image path relative to the corpus directory.
  std::string image;

  friend bool operator==(const MapDocument&, const MapDocument&) = default;
};

inline void to_json(json& j, const MapDocument& d) {
  j = json{{"map_id", d.map_id}, {"source", d.source}, {"language", d.language}, {"image", d.image}};
}
inline void from_json(const json& j, MapDocument& d) {
  d.map_id = j.at("map_id").get<std::string>();
  d.source = j.value("source", "synthetic");
  d.language = j.value("language", Language::English);
  d.image = j.value("image", "images/" + d.map_id + ".png");
}

// ---------------------------------------------------------------------------
// Region tree

enum class LegendSide { left, right };

struct ComponentNode {
  ComponentKind kind = ComponentKind::other;
  BBox bbox;
  double score = 0.0;
};

struct LegendPairNode {
  BBox text_bbox;
  BBox color_bbox;
};

/// Root (whole image) -> component nodes -> legend pairs under the legend node.
/// All boxes in root coordinates of the analysed image.
struct RegionTree {
  BBox root;
  std::vector<ComponentNode> components;
  std::vector<LegendPairNode> legend_pairs;
  std::vector<Detection> orphans;

  const ComponentNode* find(ComponentKind kind) const {
    for (const auto& c : components)
      if (c.kind == kind) return &c;
    return nullptr;
  }
};

/// Containment violations; empty for a well-formed tree.
inline std::vector<std::string> validate_tree(const RegionTree& t) {
  std::vector<std::string> out;
  for (const auto& c : t.components)
    if (!t.root.contains(c.bbox)) out.push_back(fmt::format("{} node outside root", to_string(c.kind)));
  const auto* legend = t.find(ComponentKind::legend);
  if (!t.legend_pairs.empty() && !legend) out.push_back("legend pairs without legend node");
  if (legend) {
    for (std::size_t i = 0; i < t.legend_pairs.size(); ++i) {
      if (!legend->bbox.contains(t.legend_pairs[i].text_bbox) || !legend->bbox.contains(t.legend_pairs[i].color_bbox))
        out.push_back(fmt::format("legend pair {} outside legend node", i));
    }
  }
  return out;
}

namespace detail {
inline double vertical_gap(const BBox& a, const BBox& b) {
  return std::abs((a.y_min + a.y_max) / 2.0 - (b.y_min + b.y_max) / 2.0);
}
}  // namespace detail

/// Pair each text unit (top to bottom) with the nearest unused color unit by
/// vertical-centre distance that lies on `side` of it and within the larger of
/// the two heights. Leftovers are returned as orphans.
inline std::pair<std::vector<LegendPairNode>, std::vector<Detection>> pair_legend_units(
    std::vector<Detection> texts, std::vector<Detection> colors, LegendSide side) {
  auto reading_order = [](const Detection& a, const Detection& b) {
    if (a.bbox.y_min != b.bbox.y_min) return a.bbox.y_min < b.bbox.y_min;
    return a.bbox < b.bbox;
  };
  std::sort(texts.begin(), texts.end(), reading_order);
  std::sort(colors.begin(), colors.end(), reading_order);
  std::vector<bool> used(colors.size(), false);
  std::vector<LegendPairNode> pairs;
  std::vector<Detection> orphans;
  for (const auto& t : texts) {
    std::optional<std::size_t> best;
    double best_gap = 0;
    for (std::size_t i = 0; i < colors.size(); ++i) {
      if (used[i]) continue;
      const auto& c = colors[i].bbox;
      const double tc = (t.bbox.x_min + t.bbox.x_max) / 2.0, cc = (c.x_min + c.x_max) / 2.0;
      if (side == LegendSide::left ? !(cc < tc) : !(cc > tc)) continue;
      const double gap = detail::vertical_gap(t.bbox, c);
      if (gap > std::max(t.bbox.height(), c.height())) continue;
      if (!best || gap < best_gap) {
        best = i;
        best_gap = gap;
      }
    }
    if (!best) {
      orphans.push_back(t);
      continue;
    }
    used[*best] = true;
    pairs.push_back({t.bbox, colors[*best].bbox});
  }
  for (std::size_t i = 0; i < colors.size(); ++i)
    if (!used[i]) orphans.push_back(colors[i]);
  return {pairs, orphans};
}

/// `legend_dets` are relative to the legend crop. Named kinds keep their
/// highest-scoring detection; boxes are clipped to their parent.
inline RegionTree build_tree(const BBox& image_bounds, const std::vector<Detection>& component_dets,
                             const std::vector<Detection>& legend_dets, LegendSide side = LegendSide::left) {
  RegionTree tree;
  tree.root = image_bounds;
  std::vector<Detection> sorted = component_dets;
  std::sort(sorted.begin(), sorted.end(), detection_before);
  for (const auto& d : sorted) {
    const auto kind = component_kind_from(d.cls);
    if (!kind) continue;
    if (*kind != ComponentKind::other && tree.find(*kind)) continue;
    const auto clipped = intersection(d.bbox, image_bounds);
    if (!clipped) continue;
    tree.components.push_back({*kind, *clipped, d.score});
  }
  std::stable_sort(tree.components.begin(), tree.components.end(),
                   [](const ComponentNode& a, const ComponentNode& b) {
                     if (a.kind != b.kind) return a.kind < b.kind;
                     return a.bbox < b.bbox;
                   });

  const auto* legend = tree.find(ComponentKind::legend);
  std::vector<Detection> texts, colors;
  for (auto d : legend_dets) {
    if (!legend) {
      tree.orphans.push_back(d);
      continue;
    }
    const auto placed = intersection(d.bbox.translated(legend->bbox.x_min, legend->bbox.y_min), legend->bbox);
    if (!placed) continue;
    d.bbox = *placed;
    if (d.cls == kTextUnit) texts.push_back(d);
    else if (d.cls == kColorUnit) colors.push_back(d);
  }
  auto [pairs, orphans] = pair_legend_units(std::move(texts), std::move(colors), side);
  tree.legend_pairs = std::move(pairs);
  for (auto& o : orphans) tree.orphans.push_back(std::move(o));
  for (const auto& o : tree.orphans)
    spdlog::debug("orphan legend unit {} at {}", o.cls, o.bbox.to_string());
  return tree;
}

// ---------------------------------------------------------------------------
// Extraction

/// Per-channel median over the swatch with a 1-pixel border removed.
inline Rgb median_color(const Image& swatch) {
  if (swatch.width() <= 0 || swatch.height() <= 0) throw DefinitionError("median of an empty swatch");
  const int inset = (swatch.width() > 2 && swatch.height() > 2) ? 1 : 0;
  std::vector<std::uint8_t> ch[3];
  for (int y = inset; y < swatch.height() - inset; ++y) {
    for (int x = inset; x < swatch.width() - inset; ++x) {
      const Rgb p = swatch.at(x, y);
      ch[0].push_back(p.r);
      ch[1].push_back(p.g);
      ch[2].push_back(p.b);
    }
  }
  std::uint8_t med[3];
  for (int i = 0; i < 3; ++i) {
    auto mid = ch[i].begin() + static_cast<std::ptrdiff_t>(ch[i].size() / 2);
    std::nth_element(ch[i].begin(), mid, ch[i].end());
    med[i] = *mid;
  }
  return {med[0], med[1], med[2]};
}

inline std::string extraction_prompt(ComponentKind kind, const std::vector<SchemaField>& fields) {
  std::string lines;
  json example = json::object();
  for (const auto& f : fields) {
    lines += fmt::format("- {}: {}\n", f.name, f.description);
    if (f.type == "list") example[f.name] = json::array({"XXX"});
    else if (f.type == "number") example[f.name] = 0;
    else example[f.name] = "XXX";
  }
  return prompts::render(prompts::kExtraction,
                         {{"component", display_name(kind)}, {"fields", lines}, {"example", example.dump()}});
}

namespace detail {
inline json coerce_field(const SchemaField& f, const json& v) {
  if (v.is_null()) return nullptr;
  if (f.type == "number") {
    if (v.is_number()) return v;
    if (v.is_string()) {
      char* end = nullptr;
      const auto s = trim(v.get<std::string>());
      const double d = std::strtod(s.c_str(), &end);
      if (!s.empty() && end && *end == '\0') return d;
    }
    return nullptr;
  }
  if (f.type == "list") {
    json out = json::array();
    if (v.is_array()) {
      for (const auto& e : v)
        if (e.is_string() && !trim(e.get<std::string>()).empty()) out.push_back(trim(e.get<std::string>()));
    } else if (v.is_string()) {
      for (const auto& part : split(v.get<std::string>(), ','))
        if (!trim(part).empty()) out.push_back(trim(part));
    }
    return out;
  }
  std::string s = v.is_string() ? trim(v.get<std::string>()) : v.dump();
  if (s.empty()) return nullptr;
  if (f.name == "scale") s = normalize_text(s);
  return s;
}
}  // namespace detail

struct ExtractContext {
  std::string map_id;
  double scale = 1.0;
  int max_reasks = kDefaultReasks;
  int max_edge = kDefaultMaxEdge;
};

/// Ask for the schema fields of one component crop. Fields the reply omits
/// are null. ExtractionError after the re-ask budget.
inline json extract_component(const Image& image, const ComponentNode& node, const ExtractionSchema& schema,
                              Backend& backend, const ExtractContext& ctx) {
  const auto& fields = schema.for_kind(node.kind);
  auto crop_img = std::make_shared<const Image>(crop(image, node.bbox));
  CompletionRequest req;
  req.instruction = extraction_prompt(node.kind, fields);
  req.images.push_back(whole_image_attachment(crop_img, ctx.max_edge, std::string(to_string(node.kind))));
  json names = json::array();
  for (const auto& f : fields) names.push_back(f.name);
  req.hints = {{"purpose", "extract"}, {"map_id", ctx.map_id},
               {"component", std::string(to_string(node.kind))}, {"fields", names}};

  const std::string base = req.instruction;
  std::string last;
  for (int attempt = 0; attempt <= ctx.max_reasks; ++attempt) {
    if (attempt > 0) req.instruction = base + "\n" + std::string(prompts::kReask);
    last = backend.complete(req);
    if (auto reply = extract_json_object(last)) {
      json out = json::object();
      for (const auto& f : fields)
        out[f.name] = detail::coerce_field(f, reply->value.contains(f.name) ? reply->value[f.name] : json(nullptr));
      return out;
    }
  }
  throw ExtractionError(fmt::format("{} of {}: no JSON object after {} re-asks; last reply: {}",
                                    to_string(node.kind), ctx.map_id, ctx.max_reasks, last.substr(0, 200)));
}

struct LegendUnitFields {
  std::optional<std::string> rock_name;
  std::optional<std::string> stratigraphic_age;
  std::optional<std::string> lithology;
  Rgb color;
  std::optional<std::string> error;
};

/// OCR the text crop and take the median colour of the swatch. An OCR
/// failure keeps the unit with a null rock name.
inline LegendUnitFields extract_legend_unit(const Image& text_crop, const Image& color_crop, Backend& backend,
                                            const LithologyTable& table, json hints = json::object()) {
  LegendUnitFields out;
  out.color = median_color(color_crop);
  CompletionRequest req;
  req.instruction = std::string(prompts::kOcr);
  req.json_mode = false;
  req.images.push_back({std::make_shared<const Image>(text_crop), "legend_text", 1.0});
  hints["purpose"] = "ocr";
  req.hints = std::move(hints);
  try {
    const auto text = trim(backend.complete(req));
    if (text.empty()) throw BackendError("empty OCR reply");
    const auto parts = split_legend_text(text);
    out.rock_name = parts.rock_name;
    out.stratigraphic_age = parts.stratigraphic_age;
    if (auto m = table.lookup(parts.rock_name)) out.lithology = m->lithology;
  } catch (const Error& e) {
    out.error = e.what();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Merge

struct NodeInfo {
  std::optional<json> info;
  std::optional<std::string> error;
};

struct MergeResult {
  MapMetadata meta;
  std::vector<std::string> warnings;
};

namespace detail {
inline BBox to_original(const BBox& b, double scale, const BBox& bounds) {
  const BBox back = scale == 1.0 ? b : b.scaled(1.0 / scale);
  return intersection(back, bounds).value_or(back);
}
inline std::optional<std::string> text_field(const json& info, const char* key) {
  auto it = info.find(key);
  if (it == info.end() || !it->is_string()) return std::nullopt;
  return it->get<std::string>();
}
}  // namespace detail

/// Assemble metadata from the tree and per-node results. Boxes are mapped back
/// to original pixels. Never throws.
inline MergeResult merge(const MapDocument& doc, ImageSize original, const RegionTree& tree,
                         const std::vector<NodeInfo>& infos, const std::vector<LegendUnitFields>& units,
                         double scale = 1.0) noexcept {
  MergeResult r;
  try {
    auto& m = r.meta;
    m.map_id = doc.map_id;
    m.source = doc.source;
    m.language = doc.language;
    const BBox bounds{0, 0, original.width, original.height};
    for (std::size_t i = 0; i < tree.components.size(); ++i) {
      const auto& node = tree.components[i];
      Component c{node.kind, detail::to_original(node.bbox, scale, bounds), std::clamp(node.score, 0.0, 1.0),
                  json::object()};
      if (i < infos.size()) {
        if (infos[i].info && infos[i].info->is_object()) c.info = *infos[i].info;
        if (infos[i].error) r.warnings.push_back(*infos[i].error);
      }
      m.components.push_back(std::move(c));
    }
    if (const auto* t = m.find(ComponentKind::title)) m.sheet_name = detail::text_field(t->info, "sheet_name");
    if (const auto* s = m.find(ComponentKind::scale)) m.scale = detail::text_field(s->info, "scale");
    if (const auto* mm = m.find(ComponentKind::main_map)) {
      const auto& in = mm->info;
      auto num = [&](const char* k) -> std::optional<double> {
        auto it = in.find(k);
        if (it == in.end() || !it->is_number()) return std::nullopt;
        return it->get<double>();
      };
      const auto w = num("west"), e = num("east"), s = num("south"), n = num("north");
      if (w && e && s && n) {
        LonLatRange range{*w, *e, *s, *n};
        if (range.valid()) m.lonlat = range;
        else r.warnings.push_back(fmt::format("main_map: extracted lon-lat range {} {} {} {} is invalid", *w, *e, *s, *n));
      }
    }
    if (const auto* im = m.find(ComponentKind::index_map)) {
      auto it = im->info.find("neighbors");
      if (it != im->info.end() && it->is_array()) {
        std::set<std::string> names;
        for (const auto& v : *it)
          if (v.is_string()) names.insert(v.get<std::string>());
        m.neighbors = std::move(names);
      }
    }
    for (std::size_t i = 0; i < tree.legend_pairs.size(); ++i) {
      LegendUnit u;
      u.text_bbox = detail::to_original(tree.legend_pairs[i].text_bbox, scale, bounds);
      u.color_bbox = detail::to_original(tree.legend_pairs[i].color_bbox, scale, bounds);
      if (i < units.size()) {
        u.rock_name = units[i].rock_name;
        u.color = units[i].color;
        u.lithology = units[i].lithology;
        u.stratigraphic_age = units[i].stratigraphic_age;
        if (units[i].error) r.warnings.push_back(fmt::format("legend_units[{}]: {}", i, *units[i].error));
      }
      m.legend_units.push_back(std::move(u));
    }
    for (const auto& o : tree.orphans)
      r.warnings.push_back(fmt::format("orphan {} at {}", o.cls, o.bbox.to_string()));
    for (auto& v : validate_metadata(m, original)) r.warnings.push_back(std::move(v));
  } catch (const std::exception& e) {
    r.warnings.push_back(fmt::format("merge: {}", e.what()));
  } catch (...) {
    r.warnings.push_back("merge: unknown failure");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Pipeline

struct DigitizeOptions {
  const ExtractionSchema* schema = &default_schema();
  const LithologyTable* lithology = nullptr;
  double scale = 1.0;
  LegendSide legend_side = LegendSide::left;
  std::size_t parallel = 4;
  int max_reasks = kDefaultReasks;
  int max_edge = kDefaultMaxEdge;
};

struct DigitizeResult {
  MapMetadata meta;
  std::vector<std::string> warnings;
  json audit;
};

/// Detect components, then legend units inside the legend crop, build the
/// region tree, extract every node and legend unit, and merge.
inline DigitizeResult digitize(const MapDocument& doc, const Image& image, DetectorProvider& provider,
                               Backend& backend, const DigitizeOptions& opt = {}) {
  if (!(opt.scale > 0)) throw DefinitionError(fmt::format("scale {} must be positive", opt.scale));
  const LithologyTable& table = opt.lithology ? *opt.lithology : default_lithology_table(doc.language);
  const Image scaled = opt.scale == 1.0 ? image : rescale(image, opt.scale);
  const BBox bounds = scaled.bounds();

  const auto component_dets = detect(provider, {doc.map_id, &scaled, bounds, DetectStage::components, opt.scale});
  std::vector<Detection> legend_dets;
  {
    const RegionTree probe = build_tree(bounds, component_dets, {}, opt.legend_side);
    if (const auto* legend = probe.find(ComponentKind::legend)) {
      const Image legend_img = crop(scaled, legend->bbox);
      legend_dets = detect(provider, {doc.map_id, &legend_img, legend->bbox, DetectStage::legend_units, opt.scale});
    }
  }
  const RegionTree tree = build_tree(bounds, component_dets, legend_dets, opt.legend_side);

  const ExtractContext ctx{doc.map_id, opt.scale, opt.max_reasks, opt.max_edge};
  std::vector<NodeInfo> infos(tree.components.size());
  parallel_for(tree.components.size(), opt.parallel, [&](std::size_t i) {
    const auto& node = tree.components[i];
    if (opt.schema->for_kind(node.kind).empty()) {
      infos[i].info = json::object();
      return;
    }
    try {
      infos[i].info = extract_component(scaled, node, *opt.schema, backend, ctx);
    } catch (const BackendError& e) {
      infos[i].error = e.what();
    }
  });

  std::vector<LegendUnitFields> units(tree.legend_pairs.size());
  parallel_for(tree.legend_pairs.size(), opt.parallel, [&](std::size_t i) {
    const auto& p = tree.legend_pairs[i];
    const BBox original_text = opt.scale == 1.0 ? p.text_bbox : p.text_bbox.scaled(1.0 / opt.scale);
    units[i] = extract_legend_unit(crop(scaled, p.text_bbox), crop(scaled, p.color_bbox), backend, table,
                                   {{"map_id", doc.map_id}, {"text_bbox", original_text}});
  });

  auto merged = merge(doc, {image.width(), image.height()}, tree, infos, units, opt.scale);

  json nodes = json::array();
  for (std::size_t i = 0; i < tree.components.size(); ++i) {
    nodes.push_back({{"kind", tree.components[i].kind},
                     {"bbox", tree.components[i].bbox},
                     {"score", tree.components[i].score},
                     {"ok", !infos[i].error.has_value()},
                     {"error", infos[i].error ? json(*infos[i].error) : json(nullptr)}});
  }
  json audit = {{"map_id", doc.map_id},
                {"scale", opt.scale},
                {"component_detections", component_dets.size()},
                {"legend_detections", legend_dets.size()},
                {"nodes", nodes},
                {"legend_pairs", tree.legend_pairs.size()},
                {"orphans", tree.orphans.size()},
                {"warnings", merged.warnings}};
  return {std::move(merged.meta), std::move(merged.warnings), std::move(audit)};
}

}  // namespace geomap
