#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "geomap/model.hpp"
#include "geomap/text.hpp"

namespace geomap {

// ---------------------------------------------------------------------------
// Type scores

/// Intersection over union of two pixel boxes. Zero when disjoint or when
/// either box is degenerate.
inline double iou_det(const BBox& a, const BBox& b) {
  if (!a.valid() || !b.valid()) return 0.0;
  const auto inter = intersection_area(a, b);
  const auto uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

/// Set IoU over normalized names. Two empty sets are identical (1.0).
inline double iou_set_discrete(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::set<std::string> na, nb;
  for (const auto& s : a) na.insert(normalize_text(s));
  for (const auto& s : b) nb.insert(normalize_text(s));
  if (na.empty() && nb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& s : na) inter += nb.count(s);
  const std::size_t uni = na.size() + nb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Region IoU of two lon-lat rectangles in degree space.
inline double iou_set_rect(const LonLatRange& a, const LonLatRange& b) {
  if (!a.valid() || !b.valid()) return 0.0;
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

inline double score_mcq(const BenchItem& item, const AnswerValue& answer) {
  if (item.qtype != QuestionType::MCQ)
    throw DefinitionError(fmt::format("score_mcq on {} item {}", to_string(item.qtype), item.id));
  const auto* a = std::get_if<ChoiceLabel>(&answer);
  const auto* gt = std::get_if<ChoiceLabel>(&item.ground_truth);
  if (!a || !gt) {
    spdlog::warn("{}: expected a choice label, got {}", item.id, to_string(shape_of(answer)));
    return 0.0;
  }
  return normalize_label(a->label) == normalize_label(gt->label) ? 1.0 : 0.0;
}

inline double score_fitb(const BenchItem& item, const AnswerValue& answer) {
  if (item.qtype != QuestionType::FITB)
    throw DefinitionError(fmt::format("score_fitb on {} item {}", to_string(item.qtype), item.id));
  const auto expected = info(item.task).shape;
  if (shape_of(answer) != expected) {
    spdlog::warn("{}: expected {} answer, got {}", item.id, to_string(expected),
                 to_string(shape_of(answer)));
    return 0.0;
  }
  if (is_grounding(item.task))
    return iou_det(std::get<BBox>(answer), std::get<BBox>(item.ground_truth));
  if (item.task == Task::index_map)
    return iou_set_discrete(std::get<NameSet>(answer).names,
                            std::get<NameSet>(item.ground_truth).names);
  if (item.task == Task::lonlat)
    return iou_set_rect(std::get<LonLatRange>(answer), std::get<LonLatRange>(item.ground_truth));
  return normalize_text(std::get<TextAnswer>(answer).text) ==
                 normalize_text(std::get<TextAnswer>(item.ground_truth).text)
             ? 1.0
             : 0.0;
}

// ---------------------------------------------------------------------------
// Aggregation

/// Mean of the per-question type scores of one ability.
inline double score_ability(std::span<const double> scores) {
  if (scores.empty()) throw DefinitionError("ability score of an empty question set");
  return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

/// Mean of exactly five ability scores.
inline double score_overall(std::span<const double> ability_scores) {
  if (ability_scores.size() != kAbilities.size())
    throw DefinitionError(fmt::format("overall score needs {} ability scores, got {}",
                                      kAbilities.size(), ability_scores.size()));
  return std::accumulate(ability_scores.begin(), ability_scores.end(), 0.0) /
         static_cast<double>(ability_scores.size());
}

// ---------------------------------------------------------------------------
// Report

enum class JudgeOrder { kept, swapped };

inline std::string_view to_string(JudgeOrder o) { return o == JudgeOrder::kept ? "kept" : "swapped"; }

struct JudgeVerdict {
  double value = 0.5;
  char raw_choice = 'C';
  JudgeOrder order = JudgeOrder::kept;

  friend bool operator==(const JudgeVerdict&, const JudgeVerdict&) = default;
};

/// Both judged comparisons of one essay item.
struct JudgeRecord {
  std::string item_id;
  /// J(q, candidate, reference)
  std::optional<JudgeVerdict> kept;
  /// J(q, reference, candidate)
  std::optional<JudgeVerdict> swapped;
  std::optional<std::string> error;
  double downscale = 1.0;
};

struct MeanScore {
  double score = 0.0;
  std::size_t n = 0;
};

struct ScoreReport {
  std::map<std::string, double> per_question;
  std::map<std::string, MeanScore> per_task;
  std::map<std::string, std::optional<MeanScore>> per_ability;
  std::optional<double> overall;
  std::vector<JudgeRecord> judge_log;
  std::vector<std::string> warnings;
};

struct QuestionScore {
  const BenchItem* item = nullptr;
  double score = 0.0;
};

/// Fold per-question scores into task, ability and overall means. Abilities
/// with no questions are reported as null; the overall score then stays null.
inline ScoreReport aggregate(std::span<const QuestionScore> scores) {
  ScoreReport report;
  std::map<std::string, std::vector<double>> by_task;
  std::map<Ability, std::vector<double>> by_ability;
  for (const auto& s : scores) {
    const double v = std::clamp(s.score, 0.0, 1.0);
    report.per_question[s.item->id] = v;
    by_task[std::string(to_string(s.item->task))].push_back(v);
    by_ability[s.item->ability].push_back(v);
  }
  for (const auto& [task, v] : by_task) report.per_task[task] = {score_ability(v), v.size()};

  std::vector<double> ability_scores;
  for (auto a : kAbilities) {
    auto it = by_ability.find(a);
    if (it == by_ability.end()) {
      report.per_ability[std::string(to_string(a))] = std::nullopt;
      report.warnings.push_back(fmt::format("no questions for ability {}", to_string(a)));
      continue;
    }
    const double s = score_ability(it->second);
    report.per_ability[std::string(to_string(a))] = MeanScore{s, it->second.size()};
    ability_scores.push_back(s);
  }
  if (ability_scores.size() == kAbilities.size()) report.overall = score_overall(ability_scores);
  return report;
}

inline void to_json(json& j, const JudgeVerdict& v) {
  j = json{{"value", v.value}, {"raw_choice", std::string(1, v.raw_choice)},
           {"order", std::string(to_string(v.order))}};
}

inline void from_json(const json& j, JudgeVerdict& v) {
  v.value = j.at("value").get<double>();
  const auto c = j.at("raw_choice").get<std::string>();
  v.raw_choice = c.empty() ? 'C' : c[0];
  v.order = j.at("order").get<std::string>() == "kept" ? JudgeOrder::kept : JudgeOrder::swapped;
}

inline void to_json(json& j, const JudgeRecord& r) {
  j = json::object();
  j["item_id"] = r.item_id;
  j["kept"] = r.kept ? json(*r.kept) : json(nullptr);
  j["swapped"] = r.swapped ? json(*r.swapped) : json(nullptr);
  j["error"] = r.error ? json(*r.error) : json(nullptr);
  j["downscale"] = r.downscale;
}

inline json report_to_json(const ScoreReport& r) {
  json j = json::object();
  j["per_question"] = r.per_question;
  json tasks = json::object();
  for (const auto& [k, v] : r.per_task) tasks[k] = {{"score", v.score}, {"n", v.n}};
  j["per_task"] = tasks;
  json abilities = json::object();
  for (const auto& [k, v] : r.per_ability)
    abilities[k] = v ? json{{"score", v->score}, {"n", v->n}} : json(nullptr);
  j["per_ability"] = abilities;
  j["overall"] = r.overall ? json(*r.overall) : json(nullptr);
  j["judge_log"] = r.judge_log;
  j["warnings"] = r.warnings;
  return j;
}

inline ScoreReport report_from_json(const json& j) {
  ScoreReport r;
  r.per_question = j.at("per_question").get<std::map<std::string, double>>();
  for (const auto& [k, v] : j.at("per_task").items())
    r.per_task[k] = {v.at("score").get<double>(), v.at("n").get<std::size_t>()};
  for (const auto& [k, v] : j.at("per_ability").items()) {
    if (v.is_null()) r.per_ability[k] = std::nullopt;
    else r.per_ability[k] = MeanScore{v.at("score").get<double>(), v.at("n").get<std::size_t>()};
  }
  if (!j.at("overall").is_null()) r.overall = j.at("overall").get<double>();
  for (const auto& e : j.value("judge_log", json::array())) {
    JudgeRecord rec;
    rec.item_id = e.at("item_id").get<std::string>();
    if (!e.at("kept").is_null()) rec.kept = e.at("kept").get<JudgeVerdict>();
    if (!e.at("swapped").is_null()) rec.swapped = e.at("swapped").get<JudgeVerdict>();
    if (!e.at("error").is_null()) rec.error = e.at("error").get<std::string>();
    rec.downscale = e.value("downscale", 1.0);
    r.judge_log.push_back(std::move(rec));
  }
  r.warnings = j.value("warnings", std::vector<std::string>{});
  return r;
}

namespace detail {
inline std::string cell(const std::optional<double>& v) {
  return v ? fmt::format("{:.3f}", *v) : std::string("-");
}
}  // namespace detail

inline std::string ability_header(std::string_view first) {
  return fmt::format("{:<16}{:>12}{:>12}{:>12}{:>12}{:>12}{:>12}\n", first, "Extracting",
                     "Grounding", "Referring", "Reasoning", "Analyzing", "Overall");
}

inline std::string ability_row(std::string_view label, const ScoreReport& r) {
  std::string row = fmt::format("{:<16}", label);
  for (auto a : kAbilities) {
    const auto& v = r.per_ability.at(std::string(to_string(a)));
    row += fmt::format("{:>12}", detail::cell(v ? std::optional<double>(v->score) : std::nullopt));
  }
  row += fmt::format("{:>12}\n", detail::cell(r.overall));
  return row;
}

/// Plain-text table with one row per method, abilities as columns.
inline std::string report_table(std::string_view label, const ScoreReport& r) {
  return ability_header("Method") + ability_row(label, r);
}

/// Per-task means, one row per task in canonical task order.
inline std::string report_csv(const ScoreReport& r) {
  std::string out = "task,ability,score,n\n";
  for (const auto& ti : kTasks) {
    auto it = r.per_task.find(std::string(ti.name));
    if (it == r.per_task.end()) continue;
    out += fmt::format("{},{},{:.6f},{}\n", ti.name, to_string(ti.ability), it->second.score,
                       it->second.n);
  }
  return out;
}

}  // namespace geomap
