#pragma once

// Recovering a JSON object from model replies that may wrap it in prose or
// code fences.

#include <optional>
#include <regex>
#include <string>
#include <string_view>

#include "geomap/model.hpp"
#include "geomap/text.hpp"

namespace geomap {

enum class ParsePath { strict, fenced, brace_slice, bbox_regex, letter, plain_text };

inline std::string_view to_string(ParsePath p) {
  switch (p) {
    case ParsePath::strict: return "strict";
    case ParsePath::fenced: return "fenced";
    case ParsePath::brace_slice: return "brace_slice";
    case ParsePath::bbox_regex: return "bbox_regex";
    case ParsePath::letter: return "letter";
    case ParsePath::plain_text: return "plain_text";
  }
  return "strict";
}

struct JsonReply {
  json value;
  ParsePath path = ParsePath::strict;
};

namespace detail {
inline std::optional<json> try_object(std::string_view text) {
  json j = json::parse(text.begin(), text.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  return j;
}
}  // namespace detail

/// Strict parse of the whole reply, then the body of the first ``` fence,
/// then the slice from the first '{' to the last '}'.
inline std::optional<JsonReply> extract_json_object(std::string_view raw) {
  const std::string text = trim(raw);
  if (auto j = detail::try_object(text)) return JsonReply{std::move(*j), ParsePath::strict};

  if (auto open = text.find("```"); open != std::string::npos) {
    auto body_start = text.find('\n', open);
    auto close = body_start == std::string::npos ? std::string::npos : text.find("```", body_start);
    if (close != std::string::npos) {
      if (auto j = detail::try_object(trim(std::string_view(text).substr(body_start, close - body_start))))
        return JsonReply{std::move(*j), ParsePath::fenced};
    }
  }

  const auto first = text.find('{');
  const auto last = text.rfind('}');
  if (first != std::string::npos && last != std::string::npos && last > first) {
    if (auto j = detail::try_object(std::string_view(text).substr(first, last - first + 1)))
      return JsonReply{std::move(*j), ParsePath::brace_slice};
  }
  return std::nullopt;
}

/// Four integers in reading order, e.g. "[10, 20, 300, 400]" or "(10,20)-(300,400)".
inline std::optional<BBox> find_bbox(std::string_view text) {
  static const std::regex kFour(R"((-?\d+)\D+?(-?\d+)\D+?(-?\d+)\D+?(-?\d+))");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(text.begin(), text.end(), m, kFour)) return std::nullopt;
  try {
    return BBox{std::stoi(m[1].str()), std::stoi(m[2].str()), std::stoi(m[3].str()),
                std::stoi(m[4].str())};
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

/// A standalone choice letter among `letters`, e.g. "B", "(C)", "Answer: D.".
inline std::optional<char> find_choice_letter(std::string_view text, std::string_view letters = "ABCD") {
  const std::string pattern = fmt::format(R"((?:^|[^A-Za-z])([{}])(?![A-Za-z]))", letters);
  const std::regex re(pattern);
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(text.begin(), text.end(), m, re)) return std::nullopt;
  return m[1].str()[0];
}

}  // namespace geomap
