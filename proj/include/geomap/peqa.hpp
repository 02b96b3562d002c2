#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "geomap/backend.hpp"
#include "geomap/dki.hpp"
#include "geomap/error.hpp"
#include "geomap/image.hpp"
#include "geomap/judge.hpp"
#include "geomap/model.hpp"
#include "geomap/prompts.hpp"
#include "geomap/reply.hpp"

namespace geomap {

inline constexpr std::size_t kMaxAttachments = 6;

struct Toggles {
  bool hie = true;
  bool dki = true;
  bool peqa = true;

  friend bool operator==(const Toggles&, const Toggles&) = default;
};

/// "all", "none", or a '+'-joined subset such as "HIE+DKI" (case-insensitive).
inline Toggles parse_toggles(std::string_view s) {
  const auto key = ascii_lower(trim(s));
  if (key == "all") return {true, true, true};
  if (key == "none") return {false, false, false};
  Toggles t{false, false, false};
  for (const auto& part : split(key, '+')) {
    const auto p = trim(part);
    if (p == "hie") t.hie = true;
    else if (p == "dki") t.dki = true;
    else if (p == "peqa") t.peqa = true;
    else throw DefinitionError(fmt::format("unknown module '{}' in toggle set '{}'", p, s));
  }
  return t;
}

inline std::string toggles_label(const Toggles& t) {
  if (t.hie && t.dki && t.peqa) return "all";
  std::vector<std::string> on;
  if (t.hie) on.push_back("HIE");
  if (t.dki) on.push_back("DKI");
  if (t.peqa) on.push_back("PEQA");
  return on.empty() ? "none" : fmt::format("{}", fmt::join(on, "+"));
}

// ---------------------------------------------------------------------------
// Crops

/// Components attached for each task, in attachment order. An empty list
/// means the whole image.
inline std::vector<ComponentKind> crop_route(Task task) {
  using K = ComponentKind;
  if (is_grounding(task)) return {};
  switch (task) {
    case Task::sheet_name: return {K::title};
    case Task::scale: return {K::scale};
    case Task::lonlat:
    case Task::index_map: return {K::index_map, K::main_map};
    case Task::color_by_rock:
    case Task::rock_by_color: return {K::legend};
    case Task::area_comparison:
    case Task::fault_existence:
    case Task::lithology_composition: return {K::main_map, K::legend};
    case Task::lonlat_localization: return {K::title, K::main_map};
    case Task::earthquake_risk: return {K::other, K::main_map};  // other = the whole image
    default: return {};
  }
}

/// Attachments for an item. `image` is the map as analysed (possibly rescaled)
/// and `meta_scale` maps metadata boxes onto it.
inline std::vector<ImageAttachment> select_crops(const BenchItem& item, const MapMetadata* meta,
                                                 const std::shared_ptr<const Image>& image,
                                                 double meta_scale = 1.0, int max_edge = kDefaultMaxEdge) {
  std::vector<ImageAttachment> out;
  if (!image) return out;
  const auto route = crop_route(item.task);
  for (const auto kind : route) {
    if (out.size() == kMaxAttachments) break;
    if (kind == ComponentKind::other) {
      out.push_back(whole_image_attachment(image, max_edge, "full"));
      continue;
    }
    const Component* c = meta ? meta->find(kind) : nullptr;
    if (!c) continue;
    const auto box = intersection(meta_scale == 1.0 ? c->bbox : c->bbox.scaled(meta_scale), image->bounds());
    if (!box) continue;
    out.push_back(whole_image_attachment(std::make_shared<const Image>(crop(*image, *box)), max_edge,
                                         std::string(to_string(kind))));
  }
  if (out.empty()) out.push_back(whole_image_attachment(image, max_edge, "full"));
  return out;
}

// ---------------------------------------------------------------------------
// Prompt

struct QAPrompt {
  std::string system{prompts::kSystem};
  std::vector<ImageAttachment> images;
  std::string instruction;
};

/// Compact digest of metadata for the prompt; boxes multiplied by `frame`.
inline json metadata_digest(const MapMetadata& m, double frame = 1.0) {
  json j = json::object();
  if (m.sheet_name) j["sheet_name"] = *m.sheet_name;
  if (m.scale) j["scale"] = *m.scale;
  if (m.lonlat) j["lonlat"] = *m.lonlat;
  if (m.neighbors) j["neighbors"] = *m.neighbors;
  json comps = json::array();
  for (const auto& c : m.components) {
    const BBox b = frame == 1.0 ? c.bbox : c.bbox.scaled(frame);
    comps.push_back({{"kind", c.kind}, {"bbox", json::array({b.x_min, b.y_min, b.x_max, b.y_max})}});
  }
  if (!comps.empty()) j["components"] = comps;
  json units = json::array();
  for (const auto& u : m.legend_units) {
    json e = json::object();
    if (u.rock_name) e["rock_name"] = *u.rock_name;
    e["color"] = to_hex(u.color);
    if (u.lithology) e["lithology"] = *u.lithology;
    if (u.stratigraphic_age) e["stratigraphic_age"] = *u.stratigraphic_age;
    units.push_back(e);
  }
  if (!units.empty()) j["legend_units"] = units;
  if (!m.rock_areas.empty()) j["rock_areas"] = m.rock_areas;
  if (m.fault_grid) j["fault_grid"] = *m.fault_grid;
  return j;
}

inline json knowledge_digest(const KnowledgePacket& k) {
  json arr = json::array();
  for (const auto& e : k.entries) arr.push_back({{"expert", e.expert}, {"kind", e.kind}, {"payload", e.payload}});
  return arr;
}

/// Question text as shown to the model, with MCQ options appended.
inline std::string question_with_choices(const BenchItem& item) {
  std::string q = item.question_text;
  if (item.choices)
    for (const auto& c : *item.choices) q += fmt::format("\n{}. {}", c.label, c.text);
  return q;
}

inline QAPrompt build_prompt(const BenchItem& item, const MapMetadata* meta, const KnowledgePacket& knowledge,
                             std::vector<ImageAttachment> crops, bool extras = true, double frame = 1.0) {
  QAPrompt p;
  p.images = std::move(crops);
  const std::string information = meta ? metadata_digest(*meta, frame).dump() : "none";
  const std::string injected = knowledge.empty() ? "none" : knowledge_digest(knowledge).dump();
  p.instruction = prompts::render(extras ? prompts::kQuestionAnswering : prompts::kQuestionAnsweringBare,
                                  {{"information", information == "{}" ? "none" : information},
                                   {"knowledge", injected},
                                   {"question_type", std::string(prompts::question_type_phrase(item.qtype))},
                                   {"question", question_with_choices(item)}});
  return p;
}

// ---------------------------------------------------------------------------
// Response parsing

struct ParsedAnswer {
  std::string reason;
  AnswerValue answer;
  std::string raw;
  ParsePath path = ParsePath::strict;
  /// Recovered by a fallback rather than the strict path.
  bool lenient = false;
};

namespace detail {
inline std::optional<std::string> single_label(std::string_view s) {
  const auto norm = normalize_label(s);
  if (norm.size() == 1 && norm[0] >= 'A' && norm[0] <= 'D') return norm;
  if (auto c = find_choice_letter(trim(s))) return std::string(1, *c);
  return std::nullopt;
}

inline std::optional<std::vector<double>> numbers_in(std::string_view s, std::size_t n) {
  static const std::regex kNum(R"(-?\d+(?:\.\d+)?)");
  std::vector<double> out;
  for (std::regex_iterator<std::string_view::const_iterator> it(s.begin(), s.end(), kNum), end; it != end; ++it)
    out.push_back(std::stod(it->str()));
  if (out.size() != n) return std::nullopt;
  return out;
}

inline std::optional<AnswerValue> coerce_answer(const json& v, AnswerShape shape) {
  switch (shape) {
    case AnswerShape::choice_label:
      if (v.is_string())
        if (auto l = single_label(v.get<std::string>())) return ChoiceLabel{*l};
      return std::nullopt;
    case AnswerShape::text:
      if (v.is_string()) return TextAnswer{trim(v.get<std::string>())};
      if (v.is_number()) return TextAnswer{v.dump()};
      return std::nullopt;
    case AnswerShape::bbox:
      if (v.is_string()) {
        if (auto b = find_bbox(v.get<std::string>())) return *b;
        return std::nullopt;
      }
      if ((v.is_array() && v.size() == 4) || v.is_object()) {
        try {
          if (v.is_array()) {
            return BBox{static_cast<int>(std::lround(v[0].get<double>())), static_cast<int>(std::lround(v[1].get<double>())),
                        static_cast<int>(std::lround(v[2].get<double>())), static_cast<int>(std::lround(v[3].get<double>()))};
          }
          return v.get<BBox>();
        } catch (const std::exception&) {
          return std::nullopt;
        }
      }
      return std::nullopt;
    case AnswerShape::name_set: {
      NameSet s;
      if (v.is_array()) {
        for (const auto& e : v)
          if (e.is_string() && !trim(e.get<std::string>()).empty()) s.names.insert(trim(e.get<std::string>()));
        return s;
      }
      if (v.is_string()) {
        std::string text = replace_all(v.get<std::string>(), ";", ",");
        for (const auto& part : split(text, ','))
          if (!trim(part).empty()) s.names.insert(trim(part));
        return s;
      }
      return std::nullopt;
    }
    case AnswerShape::lonlat:
      try {
        if (v.is_object()) return v.get<LonLatRange>();
        if (v.is_array() && v.size() == 4)
          return LonLatRange{v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
        if (v.is_string())
          if (auto n = numbers_in(v.get<std::string>(), 4)) return LonLatRange{(*n)[0], (*n)[1], (*n)[2], (*n)[3]};
      } catch (const std::exception&) {
      }
      return std::nullopt;
    case AnswerShape::essay:
      if (v.is_string()) return Essay{v.get<std::string>()};
      return std::nullopt;
  }
  return std::nullopt;
}
}  // namespace detail

/// Strict JSON {"reason", "answer"} first, then fenced block, brace slice,
/// four-integer bbox, single MCQ letter, and (bare prompts only) plain text.
/// ParseError when nothing fits.
inline ParsedAnswer parse_response(std::string_view raw, AnswerShape shape, bool allow_plain_text = false) {
  ParsedAnswer out;
  out.raw = std::string(raw);
  if (auto reply = extract_json_object(raw)) {
    const auto& obj = reply->value;
    if (auto it = obj.find("answer"); it != obj.end()) {
      if (auto v = detail::coerce_answer(*it, shape)) {
        out.answer = std::move(*v);
        out.path = reply->path;
        out.lenient = reply->path != ParsePath::strict;
        if (auto r = obj.find("reason"); r != obj.end() && r->is_string()) out.reason = r->get<std::string>();
        return out;
      }
    }
  }
  if (shape == AnswerShape::bbox) {
    if (auto b = find_bbox(raw)) {
      out.answer = *b;
      out.path = ParsePath::bbox_regex;
      out.lenient = true;
      return out;
    }
  }
  if (shape == AnswerShape::choice_label) {
    if (auto c = find_choice_letter(trim(raw))) {
      out.answer = ChoiceLabel{std::string(1, *c)};
      out.path = ParsePath::letter;
      out.lenient = true;
      return out;
    }
  }
  if (allow_plain_text && (shape == AnswerShape::text || shape == AnswerShape::essay)) {
    const auto t = trim(raw);
    if (!t.empty()) {
      if (shape == AnswerShape::text) out.answer = TextAnswer{t};
      else out.answer = Essay{t};
      out.path = ParsePath::plain_text;
      out.lenient = true;
      return out;
    }
  }
  throw ParseError(fmt::format("no {} answer recoverable from reply: {}", to_string(shape),
                               std::string(raw.substr(0, 200))));
}

// ---------------------------------------------------------------------------
// Answering

struct AnswerRecord {
  std::string item_id;
  std::optional<AnswerValue> answer;
  std::string reason;
  std::string raw;
  std::optional<ParsePath> parse_path;
  std::optional<std::string> error;
};

inline void to_json(json& j, const AnswerRecord& r) {
  j = json{{"item_id", r.item_id},
           {"answer", r.answer ? json(*r.answer) : json(nullptr)},
           {"reason", r.reason},
           {"raw", r.raw},
           {"parse_path", r.parse_path ? json(std::string(to_string(*r.parse_path))) : json(nullptr)},
           {"error", r.error ? json(*r.error) : json(nullptr)}};
}
inline void from_json(const json& j, AnswerRecord& r) {
  r.item_id = j.at("item_id").get<std::string>();
  if (auto it = j.find("answer"); it != j.end() && !it->is_null()) r.answer = it->get<AnswerValue>();
  else r.answer.reset();
  r.reason = j.value("reason", "");
  r.raw = j.value("raw", "");
  r.parse_path.reset();
  if (auto it = j.find("parse_path"); it != j.end() && it->is_string()) {
    for (auto p : {ParsePath::strict, ParsePath::fenced, ParsePath::brace_slice, ParsePath::bbox_regex,
                   ParsePath::letter, ParsePath::plain_text})
      if (to_string(p) == it->get<std::string>()) r.parse_path = p;
  }
  if (auto it = j.find("error"); it != j.end() && it->is_string()) r.error = it->get<std::string>();
  else r.error.reset();
}

struct AnswerContext {
  /// The map as analysed (already rescaled by `scale`).
  std::shared_ptr<const Image> image;
  /// Digitized metadata in original pixels; ignored when HIE is off.
  const MapMetadata* meta = nullptr;
  Backend* backend = nullptr;
  const ExpertRegistry* experts = nullptr;
  const ToolPool* tools = nullptr;
  Toggles toggles;
  double scale = 1.0;
  int max_edge = kDefaultMaxEdge;
  bool record_timings = false;
};

struct AnswerOutcome {
  AnswerRecord record;
  json audit;
};

inline json attachment_descriptor(const ImageAttachment& a) {
  return {{"label", a.label},
          {"width", a.image ? a.image->width() : 0},
          {"height", a.image ? a.image->height() : 0},
          {"downscale", a.downscale}};
}

/// One end-to-end answer. Backend and parse failures are recorded, not thrown.
inline AnswerOutcome answer(const BenchItem& item, const AnswerContext& ctx) {
  if (!ctx.backend) throw DefinitionError("answer: no backend");
  const auto t0 = std::chrono::steady_clock::now();
  AnswerOutcome out;
  out.record.item_id = item.id;
  const MapMetadata* meta = ctx.toggles.hie ? ctx.meta : nullptr;

  KnowledgePacket knowledge;
  std::set<std::string> gated;
  std::vector<std::string> warnings;
  if (ctx.toggles.dki && ctx.experts && ctx.tools) {
    auto g = gate(item, *ctx.experts, *ctx.backend);
    gated = g.kinds;
    warnings = g.warnings;
    if (!gated.empty()) {
      MapMetadata keyed;
      if (meta) keyed = *meta;
      keyed.map_id = item.map_id;
      knowledge = consult_all(*ctx.experts, gated, keyed, *ctx.tools);
      for (auto& w : knowledge.warnings) warnings.push_back(w);
    }
  }

  // Frame of any bbox in the answer relative to original pixels.
  double frame = ctx.scale;
  std::vector<ImageAttachment> images;
  if (ctx.toggles.peqa) {
    images = select_crops(item, meta, ctx.image, ctx.scale, ctx.max_edge);
  } else if (ctx.image) {
    images.push_back(whole_image_attachment(ctx.image, ctx.max_edge, "full"));
  }
  if (ctx.image) {
    const int edge = std::max(ctx.image->width(), ctx.image->height());
    if (ctx.max_edge > 0 && edge > ctx.max_edge) frame *= static_cast<double>(ctx.max_edge) / edge;
  }

  const QAPrompt prompt = build_prompt(item, meta, knowledge, images, ctx.toggles.peqa, frame);
  CompletionRequest req;
  req.system = prompt.system;
  req.instruction = prompt.instruction;
  req.images = prompt.images;
  req.hints = {{"purpose", "qa"}, {"item_id", item.id}, {"map_id", item.map_id},
               {"task", std::string(to_string(item.task))}, {"scale", frame}};

  try {
    out.record.raw = ctx.backend->complete(req);
    auto parsed = parse_response(out.record.raw, info(item.task).shape, !ctx.toggles.peqa);
    if (auto* b = std::get_if<BBox>(&parsed.answer); b && frame != 1.0) *b = b->scaled(1.0 / frame);
    out.record.answer = std::move(parsed.answer);
    out.record.reason = std::move(parsed.reason);
    out.record.parse_path = parsed.path;
  } catch (const Error& e) {
    out.record.error = e.what();
  }

  json attachments = json::array();
  for (const auto& a : prompt.images) attachments.push_back(attachment_descriptor(a));
  out.audit = {{"item_id", item.id},
               {"map_id", item.map_id},
               {"task", std::string(to_string(item.task))},
               {"toggles", toggles_label(ctx.toggles)},
               {"gated_kinds", gated},
               {"knowledge", knowledge},
               {"system", prompt.system},
               {"prompt", prompt.instruction},
               {"attachments", attachments},
               {"answer_frame", frame},
               {"raw_response", out.record.raw},
               {"parse_path", out.record.parse_path ? json(std::string(to_string(*out.record.parse_path))) : json(nullptr)},
               {"error", out.record.error ? json(*out.record.error) : json(nullptr)},
               {"warnings", warnings}};
  if (ctx.record_timings) {
    const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out.audit["timings_ms"] = {{"total", ms}};
  }
  return out;
}

}  // namespace geomap
