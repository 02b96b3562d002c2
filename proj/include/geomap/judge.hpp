#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "geomap/backend.hpp"
#include "geomap/error.hpp"
#include "geomap/image.hpp"
#include "geomap/prompts.hpp"
#include "geomap/reply.hpp"
#include "geomap/scoring.hpp"

namespace geomap {

inline constexpr int kDefaultReasks = 2;
inline constexpr int kDefaultMaxEdge = 2048;

/// Attachment of a whole map, shrunk to `max_edge` when larger.
inline ImageAttachment whole_image_attachment(const std::shared_ptr<const Image>& image,
                                              int max_edge = kDefaultMaxEdge,
                                              std::string label = "full") {
  if (!image) return {nullptr, std::move(label), 1.0};
  Image fitted;
  const double factor = fit_within(*image, max_edge, fitted);
  if (factor == 1.0) return {image, std::move(label), 1.0};
  return {std::make_shared<const Image>(std::move(fitted)), std::move(label), factor};
}

inline double verdict_value(char choice) {
  switch (choice) {
    case 'A': return 1.0;
    case 'B': return 0.0;
    default: return 0.5;
  }
}

/// {"answer": "A"} (or a reply containing such an object) to a choice letter.
inline std::optional<char> parse_judge_reply(std::string_view raw) {
  const auto reply = extract_json_object(raw);
  if (!reply) return std::nullopt;
  const auto it = reply->value.find("answer");
  if (it == reply->value.end() || !it->is_string()) return std::nullopt;
  const std::string answer = trim(it->get<std::string>());
  if (answer.size() == 1 && std::string_view("ABCabc").find(answer[0]) != std::string_view::npos)
    return static_cast<char>(std::toupper(static_cast<unsigned char>(answer[0])));
  return find_choice_letter(answer, "ABC");
}

/// One judged comparison "is answer1 better than answer2". Re-asks with the
/// JSON-only suffix when the reply has no choice; throws JudgeError once the
/// re-ask budget is spent.
inline JudgeVerdict judge_pair(std::string_view question, std::string_view answer1,
                               std::string_view answer2, const ImageAttachment& map_image,
                               Backend& backend, JudgeOrder order = JudgeOrder::kept,
                               json hints = json::object(), int max_reasks = kDefaultReasks) {
  CompletionRequest req;
  req.instruction = prompts::answer_judging(question, answer1, answer2);
  if (map_image.image) req.images.push_back(map_image);
  hints["purpose"] = "judge";
  hints["order"] = std::string(to_string(order));
  req.hints = std::move(hints);

  const std::string base = req.instruction;
  std::string last;
  for (int attempt = 0; attempt <= max_reasks; ++attempt) {
    if (attempt > 0) req.instruction = base + "\n" + std::string(prompts::kReask);
    last = backend.complete(req);
    if (const auto choice = parse_judge_reply(last)) return {verdict_value(*choice), *choice, order};
  }
  throw JudgeError(fmt::format("judge gave no A/B/C choice after {} re-asks; last reply: {}",
                               max_reasks, last.substr(0, 200)));
}

/// Order-debiased essay score 1/2 (1 - J(q, reference, candidate) + J(q, candidate, reference)).
/// Exactly two judged comparisons; any judge failure scores 0 and is recorded.
inline double score_eq(const BenchItem& item, std::string_view candidate,
                       const ImageAttachment& map_image, Backend& backend, JudgeRecord& record,
                       int max_reasks = kDefaultReasks) {
  if (item.qtype != QuestionType::EQ)
    throw DefinitionError(fmt::format("{}: score_eq on a {} item", item.id, to_string(item.qtype)));
  const auto* reference = std::get_if<Essay>(&item.ground_truth);
  if (!reference) throw DefinitionError(fmt::format("{}: essay item without reference essay", item.id));

  record.item_id = item.id;
  record.downscale = map_image.downscale;
  const json hints = {{"item_id", item.id}, {"map_id", item.map_id}};
  try {
    record.kept = judge_pair(item.question_text, candidate, reference->text, map_image, backend,
                             JudgeOrder::kept, hints, max_reasks);
    record.swapped = judge_pair(item.question_text, reference->text, candidate, map_image, backend,
                                JudgeOrder::swapped, hints, max_reasks);
  } catch (const BackendError& e) {
    record.error = e.what();
    spdlog::warn("{}: essay scored 0: {}", item.id, e.what());
    return 0.0;
  }
  return 0.5 * (1.0 - record.swapped->value + record.kept->value);
}

}  // namespace geomap
