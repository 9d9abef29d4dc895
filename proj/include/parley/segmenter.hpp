#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "parley/text.hpp"

namespace parley {

struct SentenceSegment {
  std::size_t index = 0;
  std::string text;
  // True when closed by sentence punctuation; false when cut by the length
  // cap or flushed at stream end.
  bool complete = true;

  bool operator==(const SentenceSegment&) const = default;
};

struct SegmenterConfig {
  std::vector<std::string> abbreviations{"Mr", "Mrs", "Dr", "St", "vs", "etc"};
  std::size_t max_segment_chars = 280;
};

// Incremental sentence splitter over a streamed reply.
//
// A sentence ends at a run of . ! ? (plus any closing quotes or brackets)
// followed by whitespace. When the run sits at the very end of the buffered
// text, ? and ! close immediately, and so does . unless it follows a digit
// or a listed abbreviation; those wait for the next chunk to decide. A
// period between digits or after an abbreviation never splits.
class SentenceSegmenter {
 public:
  explicit SentenceSegmenter(SegmenterConfig cfg = {}) : cfg_(std::move(cfg)) {}

  std::vector<SentenceSegment> push(std::string_view chunk) {
    buf_ += chunk;
    return drain(false);
  }

  // Stream ended: a deferred terminal run closes normally, any other
  // leftover text comes out incomplete.
  std::optional<SentenceSegment> flush() {
    auto closed = drain(true);
    if (!closed.empty()) return std::move(closed.front());
    const auto rest = text::trim(buf_);
    std::optional<SentenceSegment> out;
    if (!rest.empty()) out = make(std::string(rest), false);
    buf_.clear();
    return out;
  }

  std::size_t emitted() const { return next_index_; }
  const std::string& buffered() const { return buf_; }

 private:
  static bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }
  static bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }
  static bool is_digit(char c) { return c >= '0' && c <= '9'; }

  bool is_abbreviation_before(std::size_t dot) const {
    std::size_t k = dot;
    while (k > 0 && std::isalpha(static_cast<unsigned char>(buf_[k - 1]))) --k;
    if (k == dot) return false;
    const auto word = text::to_lower(std::string_view(buf_).substr(k, dot - k));
    for (const auto& a : cfg_.abbreviations) {
      if (text::to_lower(a) == word) return true;
    }
    return false;
  }

  // End (exclusive) of the first complete sentence in buf_, or npos.
  std::size_t find_boundary(bool at_stream_end) const {
    for (std::size_t i = 0; i < buf_.size(); ++i) {
      if (!is_terminal(buf_[i])) continue;
      std::size_t j = i;
      while (j + 1 < buf_.size() && (is_terminal(buf_[j + 1]) || is_closer(buf_[j + 1]))) ++j;
      const bool single_dot = (j == i && buf_[i] == '.');
      const bool guarded = single_dot && (is_abbreviation_before(i) || (i > 0 && is_digit(buf_[i - 1])));
      if (j + 1 < buf_.size()) {
        if (text::is_space(buf_[j + 1]) && !(single_dot && is_abbreviation_before(i))) return j + 1;
        i = j;
        continue;
      }
      // Terminal run ends the buffered text.
      if (at_stream_end || !guarded) return j + 1;
      return std::string::npos;
    }
    return std::string::npos;
  }

  SentenceSegment make(std::string text, bool complete) { return {next_index_++, std::move(text), complete}; }

  // Longest prefix of at most max chars ending at whitespace; a hard cut on a
  // UTF-8 boundary when there is none.
  std::size_t cut_point() const {
    const std::size_t max = cfg_.max_segment_chars;
    for (std::size_t k = max; k > 0; --k) {
      if (text::is_space(buf_[k])) return k;
    }
    std::size_t k = max;
    while (k > 0 && (static_cast<unsigned char>(buf_[k]) & 0xC0) == 0x80) --k;
    return k > 0 ? k : max;
  }

  std::vector<SentenceSegment> drain(bool at_stream_end) {
    std::vector<SentenceSegment> out;
    for (;;) {
      std::size_t lead = 0;
      while (lead < buf_.size() && text::is_space(buf_[lead])) ++lead;
      buf_.erase(0, lead);
      if (buf_.empty()) break;

      const std::size_t b = find_boundary(at_stream_end);
      const std::size_t span_end = b == std::string::npos ? buf_.size() : b;
      if (text::trim(std::string_view(buf_).substr(0, span_end)).size() > cfg_.max_segment_chars) {
        const std::size_t cut = cut_point();
        out.push_back(make(std::string(text::trim(std::string_view(buf_).substr(0, cut))), false));
        buf_.erase(0, cut);
        continue;
      }
      if (b == std::string::npos) break;
      out.push_back(make(std::string(text::trim(std::string_view(buf_).substr(0, b))), true));
      buf_.erase(0, b);
    }
    return out;
  }

  SegmenterConfig cfg_;
  std::string buf_;
  std::size_t next_index_ = 0;
};

}  // namespace parley
