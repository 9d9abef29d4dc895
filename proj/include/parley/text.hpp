#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace parley::text {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::string_view trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

// Maximal runs of non-whitespace characters.
inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// Collapses whitespace runs to one space and trims both ends.
inline std::string normalize_ws(std::string_view s) { return join(split_ws(s)); }

// Lowercased token with leading/trailing non-alphanumerics removed.
// Multi-byte UTF-8 sequences count as non-alphanumeric.
inline std::string bare_word(std::string_view token) {
  std::size_t b = 0;
  std::size_t e = token.size();
  while (b < e && !is_alnum(token[b])) ++b;
  while (e > b && !is_alnum(token[e - 1])) --e;
  return to_lower(token.substr(b, e - b));
}

// Words are whitespace-delimited tokens holding at least one alphanumeric
// character; pure-punctuation tokens such as "--" or "..." do not count.
inline int word_count(std::string_view s) {
  int n = 0;
  for (const auto& tok : split_ws(s)) {
    if (std::any_of(tok.begin(), tok.end(), is_alnum)) ++n;
  }
  return n;
}

}  // namespace parley::text
