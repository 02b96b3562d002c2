#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "geomap/model.hpp"
#include "geomap/text.hpp"

namespace geomap::prompts {

inline constexpr std::string_view kSystem =
    "You are an expert in geology and cartography with a focus on geologic map.";

inline constexpr std::string_view kOcr = "Only output the OCR result of the given image.";

/// Suffix appended on every re-ask after an unparsable reply.
inline constexpr std::string_view kReask = "Respond with JSON only.";

inline constexpr std::string_view kQuestionAnswering =
    "Extracted information: ${information}\n"
    "Injected knowledge: ${knowledge}\n"
    "This is a ${question_type} question.\n"
    "Based on the provided text and image, reason and answer the question in JSON format only, "
    "for example: {\"reason\": \"XXX\", \"answer\": \"XXX\"}\n"
    "\n"
    "Question:\n"
    "${question}\n"
    "Answer:";

/// Question-answering prompt without the reasoning request and example answer.
inline constexpr std::string_view kQuestionAnsweringBare =
    "Extracted information: ${information}\n"
    "Injected knowledge: ${knowledge}\n"
    "This is a ${question_type} question.\n"
    "\n"
    "Question:\n"
    "${question}\n"
    "Answer:";

inline constexpr std::string_view kAnswerJudging =
    "Please evaluate which of the two answers below is better for the essay question "
    "${question}, consider the following criteria:\n"
    "1. Diversity: The answer should address various aspects of the question, providing a "
    "well-rounded perspective.\n"
    "2. Specificity: The answer should be detailed and precise, avoiding vague or general "
    "statements.\n"
    "3. Professionalism: The answer should be articulated in a professional manner, "
    "demonstrating expertise and credibility.\n"
    "\n"
    "Answer1:\n"
    "${answer1}\n"
    "Answer2:\n"
    "${answer2}\n"
    "\n"
    "Question: which answer is better?\n"
    "A. Answer1 is better than Answer2\n"
    "B. Answer1 is worse than Answer2\n"
    "C. Answer1 and Answer2 are comparable\n"
    "\n"
    "Only respond answer with A, B or C in JSON format, for example: {\"answer\": \"C\"}\n"
    "Answer:";

inline constexpr std::string_view kExtraction =
    "This image is the ${component} component cropped from a geologic map.\n"
    "Extract the following information:\n"
    "${fields}"
    "Respond in JSON format only with exactly these keys, using null for any field that is "
    "not present, for example: ${example}";

inline constexpr std::string_view kGate =
    "You are the ${expert} of an expert group supporting question answering on a geologic map.\n"
    "Question: ${question}\n"
    "For each knowledge type below, decide whether it is needed to answer the question.\n"
    "${kinds}"
    "Respond in JSON format only with \"yes\" or \"no\" for each type, for example: ${example}";

using Bindings = std::vector<std::pair<std::string_view, std::string>>;

/// Substitute every ${name} placeholder in a single pass, so substituted values
/// are never rescanned. Unbound placeholders are left as is.
inline std::string render(std::string_view tmpl, const Bindings& bindings) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("${", pos);
    if (open == std::string_view::npos) break;
    const auto close = tmpl.find('}', open + 2);
    if (close == std::string_view::npos) break;
    out.append(tmpl.substr(pos, open - pos));
    const auto name = tmpl.substr(open + 2, close - open - 2);
    const std::string* value = nullptr;
    for (const auto& [n, v] : bindings)
      if (n == name) value = &v;
    if (value) out += *value;
    else out.append(tmpl.substr(open, close - open + 1));
    pos = close + 1;
  }
  out.append(tmpl.substr(pos));
  return out;
}

inline std::string_view question_type_phrase(QuestionType t) {
  switch (t) {
    case QuestionType::MCQ: return "multiple-choice";
    case QuestionType::FITB: return "fill-in-the-blank";
    case QuestionType::EQ: return "essay";
  }
  return "fill-in-the-blank";
}

inline std::string answer_judging(std::string_view question, std::string_view answer1,
                                  std::string_view answer2) {
  return render(kAnswerJudging, {{"question", std::string(question)},
                                 {"answer1", std::string(answer1)},
                                 {"answer2", std::string(answer2)}});
}

}  // namespace geomap::prompts
