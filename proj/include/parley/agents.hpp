#pragma once

#include <algorithm>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "parley/core.hpp"
#include "parley/error.hpp"
#include "parley/prompts.hpp"
#include "parley/services.hpp"
#include "parley/text.hpp"

namespace parley {

struct AgentConfig {
  Millis gate_window_ms = 500;
  Millis end_silence_ms = 700;
  std::vector<std::string> fillers{"um", "uh", "erm"};
  std::vector<std::string> connectives{"and", "but", "so", "because"};
};

// ─── (a) speech gate ─────────────────────────────────────────────────────────

enum class GateEvidence { Vad, Transcript, LlmJudgment };

inline std::string_view to_string(GateEvidence e) {
  switch (e) {
    case GateEvidence::Vad: return "vad";
    case GateEvidence::Transcript: return "transcript";
    case GateEvidence::LlmJudgment: return "llm";
  }
  return "?";
}

struct GateDecision {
  bool user_speaking = false;
  std::optional<GateEvidence> evidence;

  bool operator==(const GateDecision&) const = default;
};

struct GateWindow {
  bool vad_active = false;
  std::vector<TranscriptEvent> recent;  // newest last
  Millis now_ms = 0;
};

inline GateDecision gate_detect(const GateWindow& w, const AgentConfig& cfg = {}) {
  if (w.vad_active) return {true, GateEvidence::Vad};
  for (auto it = w.recent.rbegin(); it != w.recent.rend(); ++it) {
    if (it->kind == TranscriptEvent::Kind::Interim && w.now_ms - it->t_end_ms <= cfg.gate_window_ms) {
      return {true, GateEvidence::Transcript};
    }
  }
  return {false, std::nullopt};
}

// Sliding record of what the gate looks at. Keeps transcripts younger than
// the retention horizon.
class GateTracker {
 public:
  explicit GateTracker(Millis retention_ms = 5000) : retention_ms_(retention_ms) {}

  void on_vad(bool active) { vad_active_ = active; }
  void on_transcript(const TranscriptEvent& e) { recent_.push_back(e); }

  GateWindow window(Millis now) {
    while (!recent_.empty() && now - recent_.front().t_end_ms > retention_ms_) recent_.pop_front();
    return {vad_active_, {recent_.begin(), recent_.end()}, now};
  }

 private:
  Millis retention_ms_;
  bool vad_active_ = false;
  std::deque<TranscriptEvent> recent_;
};

// ─── (b) transcript cleaner ──────────────────────────────────────────────────

enum class EditKind { DropFiller, CollapseRepeat, FixCase };

inline std::string_view to_string(EditKind k) {
  switch (k) {
    case EditKind::DropFiller: return "drop_filler";
    case EditKind::CollapseRepeat: return "collapse_repeat";
    case EditKind::FixCase: return "fix_case";
  }
  return "?";
}

inline EditKind edit_kind_from_string(std::string_view s) {
  if (s == "drop_filler") return EditKind::DropFiller;
  if (s == "collapse_repeat") return EditKind::CollapseRepeat;
  if (s == "fix_case") return EditKind::FixCase;
  throw ParseError("unknown edit kind '" + std::string(s) + "'");
}

// Spans index whitespace tokens of the raw text.
struct Edit {
  EditKind kind;
  std::size_t token;

  bool operator==(const Edit&) const = default;
};

struct CleanedTranscript {
  std::string raw;
  std::string cleaned;
  std::vector<Edit> edits;

  bool operator==(const CleanedTranscript&) const = default;
};

namespace detail {

inline bool in_list(const std::vector<std::string>& list, const std::string& word) {
  return std::any_of(list.begin(), list.end(),
                     [&](const std::string& w) { return text::to_lower(w) == word; });
}

inline std::string capitalize(std::string tok) {
  if (!tok.empty() && tok[0] >= 'a' && tok[0] <= 'z') tok[0] = static_cast<char>(tok[0] - 'a' + 'A');
  return tok;
}

}  // namespace detail

// Reconstructs the cleaned text from raw tokens and the edit list.
inline std::string apply_edits(std::string_view raw, const std::vector<Edit>& edits) {
  auto tokens = text::split_ws(raw);
  std::vector<bool> keep(tokens.size(), true);
  for (const auto& e : edits) {
    if (e.token >= tokens.size()) throw ContractError("edit refers to token past the end");
    if (e.kind == EditKind::FixCase) {
      tokens[e.token] = detail::capitalize(tokens[e.token]);
    } else {
      keep[e.token] = false;
    }
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (keep[i]) out.push_back(tokens[i]);
  }
  return text::join(out);
}

// One left-to-right pass: fillers are dropped, a token repeating the previous
// kept token (case-insensitive) is collapsed, then the first kept token is
// capitalized. Comparing against the previous *kept* token makes the result a
// fixed point of the cleaner.
inline CleanedTranscript clean_transcript(std::string_view raw, const AgentConfig& cfg = {}) {
  CleanedTranscript out;
  out.raw = std::string(raw);
  const auto tokens = text::split_ws(raw);
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string bare = text::bare_word(tokens[i]);
    if (!bare.empty() && detail::in_list(cfg.fillers, bare)) {
      out.edits.push_back({EditKind::DropFiller, i});
      continue;
    }
    if (!bare.empty() && !kept.empty() && text::bare_word(tokens[kept.back()]) == bare) {
      out.edits.push_back({EditKind::CollapseRepeat, i});
      continue;
    }
    kept.push_back(i);
  }
  if (!kept.empty() && detail::capitalize(tokens[kept.front()]) != tokens[kept.front()]) {
    out.edits.push_back({EditKind::FixCase, kept.front()});
  }
  out.cleaned = apply_edits(raw, out.edits);
  return out;
}

// ─── (c) turn completion ─────────────────────────────────────────────────────

enum class CompletionReason { TerminalPunct, SilenceTimeout, LlmJudgment, TrailingConnective };

inline std::string_view to_string(CompletionReason r) {
  switch (r) {
    case CompletionReason::TerminalPunct: return "terminal_punct";
    case CompletionReason::SilenceTimeout: return "silence_timeout";
    case CompletionReason::LlmJudgment: return "llm";
    case CompletionReason::TrailingConnective: return "trailing_connective";
  }
  return "?";
}

struct CompletionAssessment {
  bool complete = false;
  double confidence = 0.0;
  CompletionReason reason = CompletionReason::SilenceTimeout;

  bool operator==(const CompletionAssessment&) const = default;
};

inline CompletionAssessment assess_completion(std::string_view utterance, Millis silence_ms,
                                              const AgentConfig& cfg = {}) {
  if (silence_ms < 0) throw ContractError("assess_completion: negative silence");
  const auto body = text::trim(utterance);
  const auto tokens = text::split_ws(body);
  if (!tokens.empty() && detail::in_list(cfg.connectives, text::bare_word(tokens.back()))) {
    return {false, 0.9, CompletionReason::TrailingConnective};
  }
  if (!body.empty()) {
    const char last = body.back();
    if (last == '.' || last == '!' || last == '?') return {true, 0.9, CompletionReason::TerminalPunct};
    if (silence_ms >= cfg.end_silence_ms) return {true, 0.8, CompletionReason::SilenceTimeout};
  }
  const double progress =
      cfg.end_silence_ms > 0 ? std::min(1.0, double(silence_ms) / double(cfg.end_silence_ms)) : 1.0;
  return {false, 1.0 - progress, CompletionReason::SilenceTimeout};
}

// ─── Pluggable strategies ────────────────────────────────────────────────────

class SpeechGate {
 public:
  virtual ~SpeechGate() = default;
  virtual GateDecision detect(const GateWindow& window) = 0;
};

class TranscriptCleaner {
 public:
  virtual ~TranscriptCleaner() = default;
  virtual CleanedTranscript clean(std::string_view raw, std::span<const Utterance> history) = 0;
};

class CompletionJudge {
 public:
  virtual ~CompletionJudge() = default;
  virtual CompletionAssessment assess(std::string_view utterance, Millis silence_ms,
                                      std::span<const Utterance> history) = 0;
};

class Responder {
 public:
  virtual ~Responder() = default;
  // History must end with a user utterance.
  virtual TokenStream reply(std::span<const Utterance> history) = 0;
};

inline TokenStream generate_reply(std::span<const Utterance> history, Responder& responder) {
  if (history.empty() || history.back().speaker != Speaker::User) {
    throw ContractError("generate_reply: history must end with a user utterance");
  }
  return responder.reply(history);
}

class RuleGate final : public SpeechGate {
 public:
  explicit RuleGate(AgentConfig cfg = {}) : cfg_(std::move(cfg)) {}
  GateDecision detect(const GateWindow& w) override { return gate_detect(w, cfg_); }

 private:
  AgentConfig cfg_;
};

class RuleCleaner final : public TranscriptCleaner {
 public:
  explicit RuleCleaner(AgentConfig cfg = {}) : cfg_(std::move(cfg)) {}
  CleanedTranscript clean(std::string_view raw, std::span<const Utterance>) override {
    return clean_transcript(raw, cfg_);
  }

 private:
  AgentConfig cfg_;
};

class RuleCompletion final : public CompletionJudge {
 public:
  explicit RuleCompletion(AgentConfig cfg = {}) : cfg_(std::move(cfg)) {}
  CompletionAssessment assess(std::string_view u, Millis silence, std::span<const Utterance>) override {
    return assess_completion(u, silence, cfg_);
  }

 private:
  AgentConfig cfg_;
};

struct RuleResponderConfig {
  std::string greeting = "Hello! It is nice to meet you. What would you like to talk about?";
  std::string joke =
      "Why did the robot go on vacation? It needed to recharge its batteries. Do you want another one?";
  std::string fallback = "That sounds interesting. Tell me more about it.";
  Millis first_token_ms = 300;
  Millis per_token_ms = 40;
};

// Template replies keyed on the last user utterance.
class RuleResponder final : public Responder {
 public:
  explicit RuleResponder(RuleResponderConfig cfg = {}) : cfg_(std::move(cfg)) {}

  TokenStream reply(std::span<const Utterance> history) override {
    const std::string& pick = choose(history.back().text);
    return make_token_stream(pick, Chunking::Word, cfg_.first_token_ms, cfg_.per_token_ms);
  }

  const std::string& choose(std::string_view utterance) const {
    const auto words = text::split_ws(utterance);
    for (const auto& w : words) {
      if (text::bare_word(w) == "joke" || text::bare_word(w) == "jokes") return cfg_.joke;
    }
    static const std::vector<std::string> greetings{"hello", "hi", "hey", "greetings", "howdy"};
    if (!words.empty() && detail::in_list(greetings, text::bare_word(words.front()))) return cfg_.greeting;
    return cfg_.fallback;
  }

 private:
  RuleResponderConfig cfg_;
};

// ─── LLM-backed strategies ───────────────────────────────────────────────────

namespace detail {

inline std::string render_history(std::span<const Utterance> history) {
  std::string out;
  for (const auto& u : history) {
    out += to_string(u.speaker);
    out += ": ";
    out += u.text;
    out += '\n';
  }
  return out;
}

// Strict one-word reply. Anything else is unparseable.
inline std::optional<bool> parse_yes_no(std::string_view reply) {
  const auto t = text::to_lower(text::trim(reply));
  if (t == "yes" || t == "yes.") return true;
  if (t == "no" || t == "no.") return false;
  return std::nullopt;
}

inline ChatRequest single_turn(std::string prompt, double temperature = 0.0) {
  ChatRequest req;
  req.messages.push_back({"user", std::move(prompt)});
  req.temperature = temperature;
  return req;
}

}  // namespace detail

// Model failures and unparseable replies fall back to the rule decision.
class LlmGate final : public SpeechGate {
 public:
  LlmGate(ChatClient& client, PromptTemplate prompt, AgentConfig cfg = {})
      : client_(client), prompt_(std::move(prompt)), cfg_(std::move(cfg)) {}

  GateDecision detect(const GateWindow& w) override {
    const GateDecision rule = gate_detect(w, cfg_);
    std::string events;
    std::string latest;
    Millis last_speech = 0;
    for (const auto& e : w.recent) {
      events += std::string(to_string(e.kind)) + ": " + e.text + "\n";
      latest = e.text;
      last_speech = std::max(last_speech, e.t_end_ms);
    }
    try {
      const auto reply = client_.chat(detail::single_turn(prompt_.render(
          {{"history", events}, {"utterance", latest}, {"silence_ms", std::to_string(w.now_ms - last_speech)}})));
      if (auto yes = detail::parse_yes_no(reply.text())) {
        if (*yes) return {true, GateEvidence::LlmJudgment};
        return {false, std::nullopt};
      }
    } catch (const ServiceError&) {
    }
    return rule;
  }

 private:
  ChatClient& client_;
  PromptTemplate prompt_;
  AgentConfig cfg_;
};

class LlmCompletion final : public CompletionJudge {
 public:
  LlmCompletion(ChatClient& client, PromptTemplate prompt, AgentConfig cfg = {})
      : client_(client), prompt_(std::move(prompt)), cfg_(std::move(cfg)) {}

  CompletionAssessment assess(std::string_view u, Millis silence, std::span<const Utterance> history) override {
    const auto rule = assess_completion(u, silence, cfg_);
    try {
      const auto reply = client_.chat(detail::single_turn(prompt_.render(
          {{"history", detail::render_history(history)},
           {"utterance", std::string(u)},
           {"silence_ms", std::to_string(silence)}})));
      if (auto yes = detail::parse_yes_no(reply.text())) {
        return {*yes, 0.75, CompletionReason::LlmJudgment};
      }
    } catch (const ServiceError&) {
    }
    return rule;
  }

 private:
  ChatClient& client_;
  PromptTemplate prompt_;
  AgentConfig cfg_;
};

// Accepts the model's text only when it is the raw token sequence with
// fillers or immediate repeats removed (first-token case change allowed);
// anything that would delete a content word is rejected in favour of the
// rule cleaner.
class LlmCleaner final : public TranscriptCleaner {
 public:
  LlmCleaner(ChatClient& client, PromptTemplate prompt, AgentConfig cfg = {})
      : client_(client), prompt_(std::move(prompt)), cfg_(std::move(cfg)) {}

  CleanedTranscript clean(std::string_view raw, std::span<const Utterance> history) override {
    try {
      const auto reply = client_.chat(detail::single_turn(prompt_.render(
          {{"history", detail::render_history(history)}, {"utterance", std::string(raw)}, {"silence_ms", "0"}})));
      if (auto aligned = align(raw, reply.text())) return *aligned;
    } catch (const ServiceError&) {
    }
    return clean_transcript(raw, cfg_);
  }

  std::optional<CleanedTranscript> align(std::string_view raw, std::string_view proposal) const {
    const auto rt = text::split_ws(raw);
    const auto pt = text::split_ws(proposal);
    CleanedTranscript out{std::string(raw), {}, {}};
    std::size_t j = 0;
    std::optional<std::size_t> prev_kept;
    std::optional<std::size_t> first_kept;
    for (std::size_t i = 0; i < rt.size(); ++i) {
      const bool first = !first_kept;
      const bool match = j < pt.size() && (pt[j] == rt[i] || (first && pt[j] == detail::capitalize(rt[i])));
      if (match) {
        if (first) first_kept = i;
        prev_kept = i;
        ++j;
        continue;
      }
      const auto bare = text::bare_word(rt[i]);
      if (!bare.empty() && detail::in_list(cfg_.fillers, bare)) {
        out.edits.push_back({EditKind::DropFiller, i});
      } else if (!bare.empty() && prev_kept && text::bare_word(rt[*prev_kept]) == bare) {
        out.edits.push_back({EditKind::CollapseRepeat, i});
      } else {
        return std::nullopt;
      }
    }
    if (j != pt.size()) return std::nullopt;
    if (first_kept && pt.front() != rt[*first_kept]) out.edits.push_back({EditKind::FixCase, *first_kept});
    out.cleaned = apply_edits(raw, out.edits);
    if (out.cleaned != text::join(pt)) return std::nullopt;
    return out;
  }

 private:
  ChatClient& client_;
  PromptTemplate prompt_;
  AgentConfig cfg_;
};

class LlmResponder final : public Responder {
 public:
  LlmResponder(ChatClient& client, PromptTemplate system_prompt, double temperature = 0.7)
      : client_(client), system_(std::move(system_prompt)), temperature_(temperature) {}

  TokenStream reply(std::span<const Utterance> history) override {
    ChatRequest req;
    req.system_prompt = system_.render({});
    req.temperature = temperature_;
    for (const auto& u : history) {
      req.messages.push_back({u.speaker == Speaker::User ? "user" : "assistant", u.text});
    }
    return client_.chat(req);
  }

 private:
  ChatClient& client_;
  PromptTemplate system_;
  double temperature_;
};

}  // namespace parley
