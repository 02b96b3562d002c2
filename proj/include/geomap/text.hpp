#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace geomap {

inline bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string trim(std::string_view s) {
  std::size_t i = 0, j = s.size();
  while (i < j && is_ascii_space(s[i])) ++i;
  while (j > i && is_ascii_space(s[j - 1])) --j;
  return std::string(s.substr(i, j - i));
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

inline std::string ascii_upper(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  return out;
}

inline std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : s) {
    if (is_ascii_space(c)) {
      pending = !out.empty();
      continue;
    }
    if (pending) out += ' ';
    pending = false;
    out += c;
  }
  return out;
}

/// Canonical scale text: "1 : 24,000" -> "1:24000". Returns the input
/// unchanged when it does not look like a ratio.
inline std::string canonical_scale(std::string_view s) {
  static const std::regex kRatio(R"(^\s*1\s*:\s*[0-9][0-9,\s]*$)");
  std::string str(s);
  if (!std::regex_match(str, kRatio)) return str;
  std::string out;
  for (char c : str)
    if (c != ',' && !is_ascii_space(c)) out += c;
  return out;
}

/// Comparison form for free-text answers: trimmed, ASCII-casefolded,
/// whitespace collapsed, terminal ASCII punctuation stripped, scale ratios
/// canonicalized. Non-ASCII bytes (e.g. CJK) pass through untouched.
inline std::string normalize_text(std::string_view s) {
  std::string out = collapse_whitespace(ascii_lower(s));
  while (!out.empty()) {
    const char c = out.back();
    if (c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?') {
      out.pop_back();
      while (!out.empty() && is_ascii_space(out.back())) out.pop_back();
    } else {
      break;
    }
  }
  return canonical_scale(out);
}

/// Multiple-choice label comparison form: keeps only ASCII alphanumerics,
/// uppercased. "b." -> "B", "(C)" -> "C".
inline std::string normalize_label(std::string_view s) {
  std::string out;
  for (char c : s)
    if (std::isalnum(static_cast<unsigned char>(c)))
      out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Shortest round-trip decimal form of a double ("-81.5", "35.25", "3").
inline std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

inline std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  if (from.empty()) return s;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

}  // namespace geomap
