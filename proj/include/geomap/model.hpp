#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "geomap/error.hpp"
#include "geomap/geometry.hpp"
#include "geomap/image.hpp"

namespace geomap {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Enumerations

enum class ComponentKind {
  title,
  scale,
  legend,
  main_map,
  index_map,
  cross_section,
  stratigraphic_column,
  other,
};

inline constexpr std::array<ComponentKind, 7> kNamedComponents = {
    ComponentKind::title,         ComponentKind::scale,
    ComponentKind::legend,        ComponentKind::main_map,
    ComponentKind::index_map,     ComponentKind::cross_section,
    ComponentKind::stratigraphic_column,
};

inline std::string_view to_string(ComponentKind k) {
  switch (k) {
    case ComponentKind::title: return "title";
    case ComponentKind::scale: return "scale";
    case ComponentKind::legend: return "legend";
    case ComponentKind::main_map: return "main_map";
    case ComponentKind::index_map: return "index_map";
    case ComponentKind::cross_section: return "cross_section";
    case ComponentKind::stratigraphic_column: return "stratigraphic_column";
    case ComponentKind::other: return "other";
  }
  return "other";
}

/// Human phrasing used in questions ("main map", "cross section").
inline std::string display_name(ComponentKind k) {
  std::string s(to_string(k));
  for (char& c : s)
    if (c == '_') c = ' ';
  return s;
}

inline std::optional<ComponentKind> component_kind_from(std::string_view s) {
  for (auto k : kNamedComponents)
    if (to_string(k) == s) return k;
  if (s == "other") return ComponentKind::other;
  return std::nullopt;
}

enum class Ability { extracting, grounding, referring, reasoning, analyzing };

inline constexpr std::array<Ability, 5> kAbilities = {
    Ability::extracting, Ability::grounding, Ability::referring,
    Ability::reasoning, Ability::analyzing};

inline std::string_view to_string(Ability a) {
  switch (a) {
    case Ability::extracting: return "extracting";
    case Ability::grounding: return "grounding";
    case Ability::referring: return "referring";
    case Ability::reasoning: return "reasoning";
    case Ability::analyzing: return "analyzing";
  }
  return "extracting";
}

inline std::optional<Ability> ability_from(std::string_view s) {
  for (auto a : kAbilities)
    if (to_string(a) == s) return a;
  return std::nullopt;
}

enum class QuestionType { MCQ, FITB, EQ };

inline std::string_view to_string(QuestionType t) {
  switch (t) {
    case QuestionType::MCQ: return "MCQ";
    case QuestionType::FITB: return "FITB";
    case QuestionType::EQ: return "EQ";
  }
  return "MCQ";
}

inline std::optional<QuestionType> qtype_from(std::string_view s) {
  if (s == "MCQ") return QuestionType::MCQ;
  if (s == "FITB") return QuestionType::FITB;
  if (s == "EQ") return QuestionType::EQ;
  return std::nullopt;
}

enum class Language { English, Chinese };

inline std::string_view to_string(Language l) {
  return l == Language::English ? "English" : "Chinese";
}

// ---------------------------------------------------------------------------
// Tasks

enum class Task {
  sheet_name,
  scale,
  lonlat,
  index_map,
  title_by_name,
  scale_by_name,
  legend_by_name,
  main_map_by_name,
  index_map_by_name,
  cross_section_by_name,
  stratigraphic_column_by_name,
  title_by_intention,
  scale_by_intention,
  legend_by_intention,
  main_map_by_intention,
  index_map_by_intention,
  cross_section_by_intention,
  stratigraphic_column_by_intention,
  color_by_rock,
  rock_by_color,
  area_comparison,
  fault_existence,
  lithology_composition,
  lonlat_localization,
  earthquake_risk,
};

/// Expected shape of an answer (and of the ground truth) for a task.
enum class AnswerShape { choice_label, text, bbox, name_set, lonlat, essay };

struct TaskInfo {
  Task task;
  std::string_view name;
  Ability ability;
  QuestionType qtype;
  AnswerShape shape;
  /// Target component of grounding tasks.
  std::optional<ComponentKind> component;
};

inline constexpr std::array<TaskInfo, 25> kTasks = {{
    {Task::sheet_name, "sheet_name", Ability::extracting, QuestionType::FITB, AnswerShape::text, std::nullopt},
    {Task::scale, "scale", Ability::extracting, QuestionType::FITB, AnswerShape::text, std::nullopt},
    {Task::lonlat, "lonlat", Ability::extracting, QuestionType::FITB, AnswerShape::lonlat, std::nullopt},
    {Task::index_map, "index_map", Ability::extracting, QuestionType::FITB, AnswerShape::name_set, std::nullopt},
    {Task::title_by_name, "title_by_name", Ability::grounding, QuestionType::FITB, AnswerShape::bbox, ComponentKind::title},
    {Task::scale_by_name, "scale_by_name", Ability::grounding, QuestionType::FITB, AnswerShape::bbox, ComponentKind::scale},
    {Task::legend_by_name, "legend_by_name", Ability::grounding, QuestionType::FITB, AnswerShape::bbox, ComponentKind::legend},
    {Task::main_map_by_name, "main_map_by_name", Ability::grounding, QuestionType::FITB, AnswerShape::bbox, ComponentKind::main_map},
    {Task::index_map_by_name, "index_map_by_name", Ability::grounding, QuestionType::FITB, AnswerShape::bbox, ComponentKind::index_map},
    {Task::cross_section_by_name, "cross_section_by_name", Ability::grounding, QuestionType::FITB, AnswerShape::bbox, ComponentKind::cross_section},
    {Task::stratigraphic_column_by_name, "stratigraphic_column_by_name", Ability::grounding, QuestionType::FITB, AnswerShape::bbox, ComponentKind::stratigraphic_column},
    {Task::title_by_intention, "title_by_intention", Ability::grounding, QuestionType::FITB, AnswerShape::bbox, ComponentKind::title},
    {Task::scale_by_intention, "scale_by_intention", Ability::grounding, QuestionType::FITB, AnswerShape::bbox, ComponentKind::scale},
    {Task::legend_by_intention, "legend_by_intention", Ability::grounding, QuestionType::FITB, AnswerShape::bbox, ComponentKind::legend},
    {Task::main_map_by_intention, "main_map_by_intention", Ability::grounding, QuestionType::FITB, AnswerShape::bbox, ComponentKind::main_map},
    {Task::index_map_by_intention, "index_map_by_intention", Ability::grounding, QuestionType::FITB, AnswerShape::bbox, ComponentKind::index_map},
    {Task::cross_section_by_intention, "cross_section_by_intention", Ability::grounding, QuestionType::FITB, AnswerShape::bbox, ComponentKind::cross_section},
    {Task::stratigraphic_column_by_intention, "stratigraphic_column_by_intention", Ability::grounding, QuestionType::FITB, AnswerShape::bbox, ComponentKind::stratigraphic_column},
    {Task::color_by_rock, "color_by_rock", Ability::referring, QuestionType::MCQ, AnswerShape::choice_label, std::nullopt},
    {Task::rock_by_color, "rock_by_color", Ability::referring, QuestionType::MCQ, AnswerShape::choice_label, std::nullopt},
    {Task::area_comparison, "area_comparison", Ability::reasoning, QuestionType::MCQ, AnswerShape::choice_label, std::nullopt},
    {Task::fault_existence, "fault_existence", Ability::reasoning, QuestionType::MCQ, AnswerShape::choice_label, std::nullopt},
    {Task::lithology_composition, "lithology_composition", Ability::reasoning, QuestionType::MCQ, AnswerShape::choice_label, std::nullopt},
    {Task::lonlat_localization, "lonlat_localization", Ability::reasoning, QuestionType::MCQ, AnswerShape::choice_label, std::nullopt},
    {Task::earthquake_risk, "earthquake_risk", Ability::analyzing, QuestionType::EQ, AnswerShape::essay, std::nullopt},
}};

inline const TaskInfo& info(Task t) { return kTasks[static_cast<std::size_t>(t)]; }
inline std::string_view to_string(Task t) { return info(t).name; }

inline std::optional<Task> task_from(std::string_view s) {
  for (const auto& ti : kTasks)
    if (ti.name == s) return ti.task;
  return std::nullopt;
}

inline bool is_grounding(Task t) { return info(t).ability == Ability::grounding; }
inline bool is_by_intention(Task t) {
  return is_grounding(t) && info(t).name.ends_with("_by_intention");
}
/// Extracting tasks scored with set IoU.
inline bool is_set_task(Task t) { return t == Task::index_map || t == Task::lonlat; }

// ---------------------------------------------------------------------------
// Map metadata

struct Component {
  ComponentKind kind = ComponentKind::other;
  BBox bbox;
  double confidence = 1.0;
  json info = json::object();

  friend bool operator==(const Component&, const Component&) = default;
};

struct LegendUnit {
  BBox text_bbox;
  BBox color_bbox;
  std::optional<std::string> rock_name;
  Rgb color;
  std::optional<std::string> lithology;
  std::optional<std::string> stratigraphic_age;

  friend bool operator==(const LegendUnit&, const LegendUnit&) = default;
};

/// Row 0 = north, column 0 = west.
using FaultGrid = std::array<std::array<bool, 3>, 3>;

struct MapMetadata {
  std::string map_id;
  std::string source;  // "USGS", "CGS", "synthetic" ...
  Language language = Language::English;
  std::optional<std::string> sheet_name;
  std::optional<std::string> scale;
  std::optional<LonLatRange> lonlat;
  std::optional<std::set<std::string>> neighbors;
  std::vector<Component> components;
  std::vector<LegendUnit> legend_units;
  std::map<std::string, double> rock_areas;
  std::optional<FaultGrid> fault_grid;

  const Component* find(ComponentKind kind) const {
    for (const auto& c : components)
      if (c.kind == kind) return &c;
    return nullptr;
  }

  friend bool operator==(const MapMetadata&, const MapMetadata&) = default;
};

// ---------------------------------------------------------------------------
// Answers and bench items

struct ChoiceLabel {
  std::string label;
  friend bool operator==(const ChoiceLabel&, const ChoiceLabel&) = default;
};
struct TextAnswer {
  std::string text;
  friend bool operator==(const TextAnswer&, const TextAnswer&) = default;
};
struct NameSet {
  std::set<std::string> names;
  friend bool operator==(const NameSet&, const NameSet&) = default;
};
struct Essay {
  std::string text;
  friend bool operator==(const Essay&, const Essay&) = default;
};

using AnswerValue = std::variant<ChoiceLabel, TextAnswer, BBox, NameSet, LonLatRange, Essay>;

inline AnswerShape shape_of(const AnswerValue& v) {
  return static_cast<AnswerShape>(v.index());
}

inline std::string_view to_string(AnswerShape s) {
  switch (s) {
    case AnswerShape::choice_label: return "choice_label";
    case AnswerShape::text: return "text";
    case AnswerShape::bbox: return "bbox";
    case AnswerShape::name_set: return "name_set";
    case AnswerShape::lonlat: return "lonlat";
    case AnswerShape::essay: return "essay";
  }
  return "text";
}

struct Choice {
  std::string label;
  std::string text;
  friend bool operator==(const Choice&, const Choice&) = default;
};

inline constexpr std::array<std::string_view, 4> kChoiceLabels = {"A", "B", "C", "D"};

struct BenchItem {
  std::string id;
  std::string map_id;
  Ability ability = Ability::extracting;
  Task task = Task::sheet_name;
  QuestionType qtype = QuestionType::FITB;
  std::string question_text;
  std::optional<std::vector<Choice>> choices;
  AnswerValue ground_truth;

  friend bool operator==(const BenchItem&, const BenchItem&) = default;
};

/// Structural checks of a bench item against its task definition.
inline std::vector<std::string> validate_item(const BenchItem& item) {
  std::vector<std::string> out;
  const auto& ti = info(item.task);
  if (item.ability != ti.ability) out.push_back(fmt::format("{}: ability mismatch", item.id));
  if (item.qtype != ti.qtype) out.push_back(fmt::format("{}: qtype mismatch", item.id));
  if (shape_of(item.ground_truth) != ti.shape)
    out.push_back(fmt::format("{}: ground truth shape mismatch", item.id));
  if (item.qtype == QuestionType::MCQ) {
    if (!item.choices || item.choices->size() != 4) {
      out.push_back(fmt::format("{}: MCQ needs exactly 4 choices", item.id));
    } else if (const auto* gt = std::get_if<ChoiceLabel>(&item.ground_truth)) {
      bool found = false;
      for (const auto& c : *item.choices) found = found || c.label == gt->label;
      if (!found) out.push_back(fmt::format("{}: ground truth not among choices", item.id));
    }
  } else if (item.choices) {
    out.push_back(fmt::format("{}: choices on a non-MCQ item", item.id));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {
template <typename T>
void get_optional(const json& j, const char* key, std::optional<T>& out) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    out.reset();
  } else {
    out = it->template get<T>();
  }
}
template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
  if (v) {
    j[key] = *v;
  } else {
    j[key] = nullptr;
  }
}
}  // namespace detail

inline void to_json(json& j, const BBox& b) {
  j = json{{"x_min", b.x_min}, {"y_min", b.y_min}, {"x_max", b.x_max}, {"y_max", b.y_max}};
}
inline void from_json(const json& j, BBox& b) {
  if (j.is_array()) {
    if (j.size() != 4) throw ParseError("bbox array must have 4 entries");
    b = {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
    return;
  }
  b.x_min = j.at("x_min").get<int>();
  b.y_min = j.at("y_min").get<int>();
  b.x_max = j.at("x_max").get<int>();
  b.y_max = j.at("y_max").get<int>();
}

inline void to_json(json& j, const LonLatRange& r) {
  j = json{{"west", r.west}, {"east", r.east}, {"south", r.south}, {"north", r.north}};
}
inline void from_json(const json& j, LonLatRange& r) {
  r.west = j.at("west").get<double>();
  r.east = j.at("east").get<double>();
  r.south = j.at("south").get<double>();
  r.north = j.at("north").get<double>();
}

inline void to_json(json& j, const Rgb& c) { j = json::array({c.r, c.g, c.b}); }
inline void from_json(const json& j, Rgb& c) {
  if (j.is_string()) {
    c = parse_hex(j.get<std::string>());
    return;
  }
  if (!j.is_array() || j.size() != 3) throw ParseError("color must be [r,g,b]");
  auto channel = [](const json& v) {
    const int x = v.get<int>();
    if (x < 0 || x > 255) throw ParseError(fmt::format("color channel {} outside [0,255]", x));
    return static_cast<std::uint8_t>(x);
  };
  c = {channel(j[0]), channel(j[1]), channel(j[2])};
}

inline void to_json(json& j, ComponentKind k) { j = std::string(to_string(k)); }
inline void from_json(const json& j, ComponentKind& k) {
  auto v = component_kind_from(j.get<std::string>());
  if (!v) throw ParseError(fmt::format("unknown component kind '{}'", j.get<std::string>()));
  k = *v;
}

inline void to_json(json& j, Ability a) { j = std::string(to_string(a)); }
inline void from_json(const json& j, Ability& a) {
  auto v = ability_from(j.get<std::string>());
  if (!v) throw ParseError(fmt::format("unknown ability '{}'", j.get<std::string>()));
  a = *v;
}

inline void to_json(json& j, QuestionType t) { j = std::string(to_string(t)); }
inline void from_json(const json& j, QuestionType& t) {
  auto v = qtype_from(j.get<std::string>());
  if (!v) throw ParseError(fmt::format("unknown question type '{}'", j.get<std::string>()));
  t = *v;
}

inline void to_json(json& j, Task t) { j = std::string(to_string(t)); }
inline void from_json(const json& j, Task& t) {
  auto v = task_from(j.get<std::string>());
  if (!v) throw ParseError(fmt::format("unknown task '{}'", j.get<std::string>()));
  t = *v;
}

inline void to_json(json& j, Language l) { j = std::string(to_string(l)); }
inline void from_json(const json& j, Language& l) {
  const auto s = j.get<std::string>();
  if (s == "English") l = Language::English;
  else if (s == "Chinese") l = Language::Chinese;
  else throw ParseError(fmt::format("unknown language '{}'", s));
}

inline void to_json(json& j, const Component& c) {
  j = json{{"kind", c.kind}, {"bbox", c.bbox}, {"confidence", c.confidence}, {"info", c.info}};
}
inline void from_json(const json& j, Component& c) {
  c.kind = j.at("kind").get<ComponentKind>();
  c.bbox = j.at("bbox").get<BBox>();
  c.confidence = j.value("confidence", 1.0);
  c.info = j.value("info", json::object());
}

inline void to_json(json& j, const LegendUnit& u) {
  j = json::object();
  j["text_bbox"] = u.text_bbox;
  j["color_bbox"] = u.color_bbox;
  detail::put_optional(j, "rock_name", u.rock_name);
  j["color"] = u.color;
  detail::put_optional(j, "lithology", u.lithology);
  detail::put_optional(j, "stratigraphic_age", u.stratigraphic_age);
}
inline void from_json(const json& j, LegendUnit& u) {
  u.text_bbox = j.at("text_bbox").get<BBox>();
  u.color_bbox = j.at("color_bbox").get<BBox>();
  detail::get_optional(j, "rock_name", u.rock_name);
  u.color = j.at("color").get<Rgb>();
  detail::get_optional(j, "lithology", u.lithology);
  detail::get_optional(j, "stratigraphic_age", u.stratigraphic_age);
}

inline void to_json(json& j, const MapMetadata& m) {
  j = json::object();
  j["map_id"] = m.map_id;
  j["source"] = m.source;
  j["language"] = m.language;
  detail::put_optional(j, "sheet_name", m.sheet_name);
  detail::put_optional(j, "scale", m.scale);
  detail::put_optional(j, "lonlat", m.lonlat);
  detail::put_optional(j, "neighbors", m.neighbors);
  j["components"] = m.components;
  j["legend_units"] = m.legend_units;
  j["rock_areas"] = m.rock_areas;
  detail::put_optional(j, "fault_grid", m.fault_grid);
}
inline void from_json(const json& j, MapMetadata& m) {
  m.map_id = j.value("map_id", std::string{});
  m.source = j.value("source", std::string{});
  m.language = j.contains("language") ? j.at("language").get<Language>() : Language::English;
  detail::get_optional(j, "sheet_name", m.sheet_name);
  detail::get_optional(j, "scale", m.scale);
  detail::get_optional(j, "lonlat", m.lonlat);
  detail::get_optional(j, "neighbors", m.neighbors);
  m.components = j.value("components", std::vector<Component>{});
  m.legend_units = j.value("legend_units", std::vector<LegendUnit>{});
  m.rock_areas = j.value("rock_areas", std::map<std::string, double>{});
  m.fault_grid.reset();
  if (auto it = j.find("fault_grid"); it != j.end() && !it->is_null()) {
    if (!it->is_array() || it->size() != 3)
      throw ParseError("fault_grid must be a 3x3 array");
    FaultGrid g{};
    for (std::size_t r = 0; r < 3; ++r) {
      const auto& row = (*it)[r];
      if (!row.is_array() || row.size() != 3)
        throw ParseError("fault_grid must be a 3x3 array");
      for (std::size_t c = 0; c < 3; ++c) g[r][c] = row[c].get<bool>();
    }
    m.fault_grid = g;
  }
}

inline void to_json(json& j, const AnswerValue& v) {
  j = json::object();
  j["kind"] = std::string(to_string(shape_of(v)));
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ChoiceLabel>) j["value"] = x.label;
        else if constexpr (std::is_same_v<T, TextAnswer>) j["value"] = x.text;
        else if constexpr (std::is_same_v<T, NameSet>) j["value"] = x.names;
        else if constexpr (std::is_same_v<T, Essay>) j["value"] = x.text;
        else j["value"] = x;
      },
      v);
}
inline void from_json(const json& j, AnswerValue& v) {
  const auto kind = j.at("kind").get<std::string>();
  const auto& val = j.at("value");
  if (kind == "choice_label") v = ChoiceLabel{val.get<std::string>()};
  else if (kind == "text") v = TextAnswer{val.get<std::string>()};
  else if (kind == "bbox") v = val.get<BBox>();
  else if (kind == "name_set") v = NameSet{val.get<std::set<std::string>>()};
  else if (kind == "lonlat") v = val.get<LonLatRange>();
  else if (kind == "essay") v = Essay{val.get<std::string>()};
  else throw ParseError(fmt::format("unknown answer kind '{}'", kind));
}

inline void to_json(json& j, const Choice& c) { j = json{{"label", c.label}, {"text", c.text}}; }
inline void from_json(const json& j, Choice& c) {
  c.label = j.at("label").get<std::string>();
  c.text = j.at("text").get<std::string>();
}

inline void to_json(json& j, const BenchItem& b) {
  j = json::object();
  j["id"] = b.id;
  j["map_id"] = b.map_id;
  j["ability"] = b.ability;
  j["task"] = b.task;
  j["qtype"] = b.qtype;
  j["question_text"] = b.question_text;
  detail::put_optional(j, "choices", b.choices);
  j["ground_truth"] = b.ground_truth;
}
inline void from_json(const json& j, BenchItem& b) {
  b.id = j.at("id").get<std::string>();
  b.map_id = j.at("map_id").get<std::string>();
  b.ability = j.at("ability").get<Ability>();
  b.task = j.at("task").get<Task>();
  b.qtype = j.at("qtype").get<QuestionType>();
  b.question_text = j.at("question_text").get<std::string>();
  detail::get_optional(j, "choices", b.choices);
  b.ground_truth = j.at("ground_truth").get<AnswerValue>();
}

/// Parse a JSON document, rethrowing library errors as ParseError with context.
inline json parse_json(std::string_view text, std::string_view what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("{}: {}", what, e.what()));
  }
}

}  // namespace geomap

namespace geomap {

/// Legend text convention: "<rock name> (<stratigraphic age>)", the age part
/// optional. Full-width parentheses are accepted for Chinese legends.
inline std::string compose_legend_text(const LegendUnit& u) {
  std::string s = u.rock_name.value_or("");
  if (u.stratigraphic_age && !u.stratigraphic_age->empty()) s += " (" + *u.stratigraphic_age + ")";
  return s;
}

struct LegendText {
  std::string rock_name;
  std::optional<std::string> stratigraphic_age;
};

inline LegendText split_legend_text(std::string_view raw) {
  std::string s(raw);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\n' || s.back() == '\r' || s.back() == '\t'))
    s.pop_back();
  std::size_t a = 0;
  while (a < s.size() && (s[a] == ' ' || s[a] == '\n' || s[a] == '\t')) ++a;
  s = s.substr(a);
  auto try_split = [&](std::string_view open, std::string_view close) -> std::optional<LegendText> {
    if (s.size() < close.size() || s.compare(s.size() - close.size(), close.size(), close) != 0)
      return std::nullopt;
    const auto at = s.rfind(open);
    if (at == std::string::npos) return std::nullopt;
    std::string name = s.substr(0, at);
    while (!name.empty() && name.back() == ' ') name.pop_back();
    std::string age = s.substr(at + open.size(), s.size() - close.size() - at - open.size());
    if (name.empty() || age.empty()) return std::nullopt;
    return LegendText{name, age};
  };
  if (auto r = try_split("(", ")")) return *r;
  if (auto r = try_split("\xEF\xBC\x88", "\xEF\xBC\x89")) return *r;  // （ ）
  return {s, std::nullopt};
}

}  // namespace geomap
