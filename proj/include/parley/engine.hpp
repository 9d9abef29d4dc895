#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "parley/agents.hpp"
#include "parley/core.hpp"
#include "parley/error.hpp"

namespace parley {

enum class Phase { Listening, UserSpeaking, Refining, Generating, Speaking };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Listening: return "listening";
    case Phase::UserSpeaking: return "user_speaking";
    case Phase::Refining: return "refining";
    case Phase::Generating: return "generating";
    case Phase::Speaking: return "speaking";
  }
  return "?";
}

enum class BargeInPolicy { FinishSentence, Immediate };

struct EngineConfig {
  Millis gate_window_ms = 500;
  Millis end_silence_ms = 700;
  BargeInPolicy barge_in = BargeInPolicy::FinishSentence;
  std::string fallback_sentence = "Sorry, I lost my train of thought. Could you say that again?";
};

// ─── Events ──────────────────────────────────────────────────────────────────

namespace ev {
struct FrameVad {
  bool active = false;
  bool operator==(const FrameVad&) const = default;
};
struct Transcript {
  TranscriptEvent event;
  bool operator==(const Transcript&) const = default;
};
struct GateResult {
  GateDecision decision;
  bool operator==(const GateResult&) const = default;
};
struct Cleaned {
  CleanedTranscript transcript;
  bool operator==(const Cleaned&) const = default;
};
struct Completion {
  CompletionAssessment assessment;
  bool operator==(const Completion&) const = default;
};
struct ReplyToken {
  std::string text;
  bool end = false;
  bool operator==(const ReplyToken&) const = default;
};
struct AudioPlaybackStarted {
  std::size_t segment = 0;
  std::string text;
  bool operator==(const AudioPlaybackStarted&) const = default;
};
// `segment` is absent when the stream ended after the last audio finished.
struct AudioPlaybackFinished {
  std::optional<std::size_t> segment;
  bool last = false;
  bool operator==(const AudioPlaybackFinished&) const = default;
};
struct TimerFired {
  std::string name;
  bool operator==(const TimerFired&) const = default;
};
struct ServiceError {
  std::string stage;
  std::string cause;
  bool operator==(const ServiceError&) const = default;
};
}  // namespace ev

using EventPayload = std::variant<ev::FrameVad, ev::Transcript, ev::GateResult, ev::Cleaned, ev::Completion,
                                  ev::ReplyToken, ev::AudioPlaybackStarted, ev::AudioPlaybackFinished, ev::TimerFired,
                                  ev::ServiceError>;

struct EngineEvent {
  Millis t_ms = 0;
  EventPayload payload;
  bool operator==(const EngineEvent&) const = default;
};

// ─── Actions ─────────────────────────────────────────────────────────────────

namespace act {
struct RunGate {
  bool operator==(const RunGate&) const = default;
};
struct RunCleaner {
  std::string text;
  bool operator==(const RunCleaner&) const = default;
};
struct RunCompletion {
  std::string text;
  Millis silence_ms = 0;
  bool operator==(const RunCompletion&) const = default;
};
struct StartGeneration {
  int turn = 0;
  std::vector<Utterance> history;
  bool operator==(const StartGeneration&) const = default;
};
struct SpeakSegments {
  int turn = 0;
  bool operator==(const SpeakSegments&) const = default;
};
struct StopSpeaking {
  bool immediate = false;
  bool operator==(const StopSpeaking&) const = default;
};
struct AppendLog {
  std::string kind;
  Json payload;
  bool operator==(const AppendLog&) const = default;
};
struct SetTimer {
  std::string name;
  Millis at_ms = 0;
  bool operator==(const SetTimer&) const = default;
};
struct SpeakFallback {
  std::string text;
  bool operator==(const SpeakFallback&) const = default;
};
}  // namespace act

using EngineAction = std::variant<act::RunGate, act::RunCleaner, act::RunCompletion, act::StartGeneration,
                                  act::SpeakSegments, act::StopSpeaking, act::AppendLog, act::SetTimer,
                                  act::SpeakFallback>;

// ─── State ───────────────────────────────────────────────────────────────────

struct EngineState {
  EngineConfig config;
  Phase phase = Phase::Listening;
  std::optional<Millis> last_t_ms;

  // Speech evidence.
  bool user_speaking = false;
  bool vad_active = false;
  Millis last_speech_ms = 0;

  // User side of the turn in progress.
  std::string pending_user_text;
  std::optional<Millis> user_start_ms;
  std::optional<Millis> user_end_ms;
  std::string cleaned_text;
  bool awaiting_completion = false;

  // Final transcripts heard while the robot was generating or speaking.
  std::string carry_text;
  std::optional<Millis> carry_start_ms;
  std::optional<Millis> carry_end_ms;
  std::string carry_interim;

  // Robot side.
  bool generation_started = false;
  bool reply_started = false;
  bool reply_withheld = false;
  bool fallback_pending = false;
  bool stop_requested = false;
  std::string reply_text;
  std::string robot_spoken;
  std::optional<Millis> robot_start_ms;

  std::vector<Utterance> history;
  std::vector<Turn> turns;
  int active_turn_index = 0;
  std::map<std::string, Millis> timers;

  bool operator==(const EngineState&) const = default;
};

inline EngineState initial_state(EngineConfig cfg = {}) {
  EngineState s;
  s.config = std::move(cfg);
  return s;
}

using StepResult = std::pair<EngineState, std::vector<EngineAction>>;

namespace detail {

class Stepper {
 public:
  Stepper(EngineState s, Millis t) : s_(std::move(s)), t_(t) {}

  void go(Phase to) {
    if (to == s_.phase) return;
    log("phase", {{"from", to_string(s_.phase)}, {"to", to_string(to)}});
    s_.phase = to;
  }
  void emit(EngineAction a) { out_.push_back(std::move(a)); }
  void log(std::string kind, Json payload) { out_.push_back(act::AppendLog{std::move(kind), std::move(payload)}); }
  void set_timer(const std::string& name, Millis at) {
    s_.timers[name] = at;
    emit(act::SetTimer{name, at});
  }

  void operator()(const ev::FrameVad& e) {
    if (e.active) s_.last_speech_ms = t_;
    if (e.active != s_.vad_active) {
      s_.vad_active = e.active;
      emit(act::RunGate{});
    }
  }

  void operator()(const ev::Transcript& e) {
    const auto& tr = e.event;
    s_.last_speech_ms = std::max(s_.last_speech_ms, tr.t_end_ms);
    emit(act::RunGate{});
    const bool robot_busy = s_.phase == Phase::Generating || s_.phase == Phase::Speaking;
    if (!tr.is_final()) {
      if (robot_busy) {
        s_.carry_interim = tr.text;
        log("note", {{"carried", "interim"}, {"text", tr.text}});
      }
      return;
    }
    if (text::trim(tr.text).empty()) return;
    if (robot_busy) {
      append(s_.carry_text, s_.carry_start_ms, s_.carry_end_ms, tr);
      log("note", {{"carried", "final"}, {"text", tr.text}});
      return;
    }
    append(s_.pending_user_text, s_.user_start_ms, s_.user_end_ms, tr);
    refine();
  }

  void operator()(const ev::GateResult& e) {
    s_.user_speaking = e.decision.user_speaking;
    if (e.decision.user_speaking && e.decision.evidence == GateEvidence::Transcript) {
      set_timer("gate", t_ + s_.config.gate_window_ms);
    }
    switch (s_.phase) {
      case Phase::Listening:
        if (s_.user_speaking) go(Phase::UserSpeaking);
        break;
      case Phase::UserSpeaking:
        if (!s_.user_speaking && s_.pending_user_text.empty()) go(Phase::Listening);
        break;
      case Phase::Generating:
        if (!s_.user_speaking) release_reply();
        break;
      case Phase::Speaking:
        if (s_.user_speaking && !s_.stop_requested) {
          s_.stop_requested = true;
          const bool immediate = s_.config.barge_in == BargeInPolicy::Immediate;
          emit(act::StopSpeaking{immediate});
          log("note", {{"barge_in", immediate ? "immediate" : "finish_sentence"}});
        }
        break;
      case Phase::Refining:
        break;
    }
  }

  void operator()(const ev::Cleaned& e) {
    if (s_.phase != Phase::Refining || e.transcript.raw != s_.pending_user_text) return;  // stale
    s_.cleaned_text = e.transcript.cleaned;
    if (text::trim(s_.cleaned_text).empty()) {
      clear_user_turn();
      go(s_.user_speaking ? Phase::UserSpeaking : Phase::Listening);
      return;
    }
    s_.awaiting_completion = true;
    emit(act::RunCompletion{s_.cleaned_text, std::max<Millis>(0, t_ - s_.last_speech_ms)});
  }

  void operator()(const ev::Completion& e) {
    if (s_.phase != Phase::Refining || !s_.awaiting_completion) return;
    s_.awaiting_completion = false;
    if (e.assessment.complete) {
      s_.timers.erase("end_silence");
      s_.history.push_back(make_utterance(Speaker::User, s_.cleaned_text, s_.user_start_ms.value_or(t_),
                                          s_.user_end_ms.value_or(t_)));
      s_.generation_started = true;
      emit(act::StartGeneration{s_.active_turn_index, s_.history});
      go(Phase::Generating);
      return;
    }
    go(Phase::UserSpeaking);
    if (e.assessment.reason != CompletionReason::TrailingConnective) {
      set_timer("end_silence", std::max(t_ + 1, s_.last_speech_ms + s_.config.end_silence_ms));
    }
  }

  void operator()(const ev::ReplyToken& e) {
    if (!s_.generation_started || (s_.phase != Phase::Generating && s_.phase != Phase::Speaking)) return;
    s_.reply_text += e.text;
    if (s_.phase == Phase::Generating && !s_.reply_started) {
      s_.reply_started = true;
      if (s_.user_speaking) {
        s_.reply_withheld = true;
        log("note", {{"reply", "withheld"}});
      } else {
        release_reply();
      }
    }
  }

  void operator()(const ev::AudioPlaybackStarted& e) {
    if (s_.phase != Phase::Speaking) return;
    if (!s_.robot_start_ms) s_.robot_start_ms = t_;
    if (!s_.robot_spoken.empty()) s_.robot_spoken += ' ';
    s_.robot_spoken += e.text;
    log("playback", {{"turn", s_.active_turn_index}, {"event", "started"}, {"segment", e.segment}, {"text", e.text}});
  }

  void operator()(const ev::AudioPlaybackFinished& e) {
    if (s_.phase != Phase::Speaking) return;
    log("playback", {{"turn", s_.active_turn_index},
                     {"event", e.last ? "finished_last" : "finished"},
                     {"segment", e.segment ? Json(*e.segment) : Json(nullptr)}});
    if (e.last) finish_turn();
  }

  void operator()(const ev::TimerFired& e) {
    auto it = s_.timers.find(e.name);
    if (it == s_.timers.end() || it->second != t_) return;  // stale or cancelled
    s_.timers.erase(it);
    if (e.name == "gate") {
      emit(act::RunGate{});
    } else if (e.name == "end_silence") {
      if (s_.phase != Phase::UserSpeaking || s_.pending_user_text.empty() || s_.cleaned_text.empty()) return;
      const Millis silence = t_ - s_.last_speech_ms;
      if (silence < s_.config.end_silence_ms) {
        set_timer("end_silence", s_.last_speech_ms + s_.config.end_silence_ms);
        return;
      }
      go(Phase::Refining);
      s_.awaiting_completion = true;
      emit(act::RunCompletion{s_.cleaned_text, silence});
    }
  }

  void operator()(const ev::ServiceError& e) {
    log("error", {{"stage", e.stage}, {"cause", e.cause}});
    if (s_.phase != Phase::Generating) return;
    if (s_.user_speaking) {
      s_.fallback_pending = true;
      return;
    }
    speak_fallback();
  }

  StepResult finish() && { return {std::move(s_), std::move(out_)}; }

 private:
  static void append(std::string& text, std::optional<Millis>& start, std::optional<Millis>& end,
                     const TranscriptEvent& tr) {
    if (!text.empty()) text += ' ';
    text += text::trim(tr.text);
    if (!start || tr.t_start_ms < *start) start = tr.t_start_ms;
    end = end ? std::max(*end, tr.t_end_ms) : tr.t_end_ms;
  }

  void refine() {
    s_.timers.erase("end_silence");
    s_.awaiting_completion = false;
    emit(act::RunCleaner{s_.pending_user_text});
    go(Phase::Refining);
  }

  void release_reply() {
    if (s_.fallback_pending) {
      s_.fallback_pending = false;
      speak_fallback();
      return;
    }
    if (!s_.reply_started) return;
    s_.reply_withheld = false;
    emit(act::SpeakSegments{s_.active_turn_index});
    go(Phase::Speaking);
  }

  void speak_fallback() {
    s_.reply_text = s_.config.fallback_sentence;
    s_.reply_started = true;
    emit(act::SpeakFallback{s_.config.fallback_sentence});
    go(Phase::Speaking);
  }

  void clear_user_turn() {
    s_.pending_user_text.clear();
    s_.cleaned_text.clear();
    s_.user_start_ms.reset();
    s_.user_end_ms.reset();
    s_.awaiting_completion = false;
    s_.timers.erase("end_silence");
  }

  void finish_turn() {
    const Utterance& user = s_.history.back();
    const Millis robot_start = s_.robot_start_ms.value_or(t_);
    Turn turn;
    turn.index = s_.active_turn_index;
    turn.user = user;
    turn.robot = make_utterance(Speaker::Robot, s_.robot_spoken, robot_start, t_);
    turn.response_latency_ms = response_latency(user.t_end_ms, robot_start).ms;
    log("utterance", {{"turn", turn.index}, {"utterance", turn.user}});
    log("utterance", {{"turn", turn.index}, {"utterance", turn.robot}});
    s_.history.push_back(turn.robot);
    s_.turns.push_back(std::move(turn));
    ++s_.active_turn_index;

    clear_user_turn();
    s_.generation_started = false;
    s_.reply_started = false;
    s_.reply_withheld = false;
    s_.fallback_pending = false;
    s_.stop_requested = false;
    s_.reply_text.clear();
    s_.robot_spoken.clear();
    s_.robot_start_ms.reset();

    if (!s_.carry_text.empty()) {
      s_.pending_user_text = std::exchange(s_.carry_text, {});
      s_.user_start_ms = std::exchange(s_.carry_start_ms, std::nullopt);
      s_.user_end_ms = std::exchange(s_.carry_end_ms, std::nullopt);
      s_.carry_interim.clear();
      refine();
      return;
    }
    s_.carry_interim.clear();
    go(s_.user_speaking ? Phase::UserSpeaking : Phase::Listening);
  }

  EngineState s_;
  Millis t_;
  std::vector<EngineAction> out_;
};

}  // namespace detail

// Pure transition function. Event timestamps must not decrease.
inline StepResult step(EngineState state, const EngineEvent& event) {
  if (state.last_t_ms && event.t_ms < *state.last_t_ms) {
    throw ContractError("engine event at " + std::to_string(event.t_ms) + " ms precedes " +
                        std::to_string(*state.last_t_ms) + " ms");
  }
  state.last_t_ms = event.t_ms;
  detail::Stepper stepper(std::move(state), event.t_ms);
  std::visit(stepper, event.payload);
  return std::move(stepper).finish();
}

// ─── JSON ────────────────────────────────────────────────────────────────────

inline void to_json(Json& j, const GateDecision& d) {
  j = Json{{"user_speaking", d.user_speaking},
           {"evidence", d.evidence ? Json(to_string(*d.evidence)) : Json(nullptr)}};
}

inline void from_json(const Json& j, GateDecision& d) {
  d.user_speaking = j.at("user_speaking").get<bool>();
  d.evidence.reset();
  const auto& e = j.at("evidence");
  if (e.is_null()) return;
  const auto s = e.get<std::string>();
  if (s == "vad") d.evidence = GateEvidence::Vad;
  else if (s == "transcript") d.evidence = GateEvidence::Transcript;
  else if (s == "llm") d.evidence = GateEvidence::LlmJudgment;
  else throw ParseError("unknown gate evidence '" + s + "'");
}

inline void to_json(Json& j, const Edit& e) { j = Json{{"kind", to_string(e.kind)}, {"token", e.token}}; }
inline void from_json(const Json& j, Edit& e) {
  e.kind = edit_kind_from_string(j.at("kind").get<std::string>());
  e.token = j.at("token").get<std::size_t>();
}

inline void to_json(Json& j, const CleanedTranscript& c) {
  j = Json{{"raw", c.raw}, {"cleaned", c.cleaned}, {"edits", c.edits}};
}
inline void from_json(const Json& j, CleanedTranscript& c) {
  c.raw = j.at("raw").get<std::string>();
  c.cleaned = j.at("cleaned").get<std::string>();
  c.edits = j.at("edits").get<std::vector<Edit>>();
}

inline void to_json(Json& j, const CompletionAssessment& a) {
  j = Json{{"complete", a.complete}, {"confidence", a.confidence}, {"reason", to_string(a.reason)}};
}
inline void from_json(const Json& j, CompletionAssessment& a) {
  a.complete = j.at("complete").get<bool>();
  a.confidence = j.at("confidence").get<double>();
  const auto r = j.at("reason").get<std::string>();
  if (r == "terminal_punct") a.reason = CompletionReason::TerminalPunct;
  else if (r == "silence_timeout") a.reason = CompletionReason::SilenceTimeout;
  else if (r == "llm") a.reason = CompletionReason::LlmJudgment;
  else if (r == "trailing_connective") a.reason = CompletionReason::TrailingConnective;
  else throw ParseError("unknown completion reason '" + r + "'");
}

inline Json event_to_json(const EngineEvent& e) {
  Json j{{"t_ms", e.t_ms}};
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ev::FrameVad>) {
          j["type"] = "frame_vad";
          j["active"] = p.active;
        } else if constexpr (std::is_same_v<T, ev::Transcript>) {
          j["type"] = "transcript";
          j["event"] = p.event;
        } else if constexpr (std::is_same_v<T, ev::GateResult>) {
          j["type"] = "gate_result";
          j["decision"] = p.decision;
        } else if constexpr (std::is_same_v<T, ev::Cleaned>) {
          j["type"] = "cleaned";
          j["transcript"] = p.transcript;
        } else if constexpr (std::is_same_v<T, ev::Completion>) {
          j["type"] = "completion";
          j["assessment"] = p.assessment;
        } else if constexpr (std::is_same_v<T, ev::ReplyToken>) {
          j["type"] = "reply_token";
          j["text"] = p.text;
          j["end"] = p.end;
        } else if constexpr (std::is_same_v<T, ev::AudioPlaybackStarted>) {
          j["type"] = "playback_started";
          j["segment"] = p.segment;
          j["text"] = p.text;
        } else if constexpr (std::is_same_v<T, ev::AudioPlaybackFinished>) {
          j["type"] = "playback_finished";
          j["segment"] = p.segment ? Json(*p.segment) : Json(nullptr);
          j["last"] = p.last;
        } else if constexpr (std::is_same_v<T, ev::TimerFired>) {
          j["type"] = "timer_fired";
          j["name"] = p.name;
        } else if constexpr (std::is_same_v<T, ev::ServiceError>) {
          j["type"] = "service_error";
          j["stage"] = p.stage;
          j["cause"] = p.cause;
        }
      },
      e.payload);
  return j;
}

inline EngineEvent event_from_json(const Json& j) {
  EngineEvent e;
  e.t_ms = j.at("t_ms").get<Millis>();
  const auto type = j.at("type").get<std::string>();
  if (type == "frame_vad") {
    e.payload = ev::FrameVad{j.at("active").get<bool>()};
  } else if (type == "transcript") {
    e.payload = ev::Transcript{j.at("event").get<TranscriptEvent>()};
  } else if (type == "gate_result") {
    e.payload = ev::GateResult{j.at("decision").get<GateDecision>()};
  } else if (type == "cleaned") {
    e.payload = ev::Cleaned{j.at("transcript").get<CleanedTranscript>()};
  } else if (type == "completion") {
    e.payload = ev::Completion{j.at("assessment").get<CompletionAssessment>()};
  } else if (type == "reply_token") {
    e.payload = ev::ReplyToken{j.at("text").get<std::string>(), j.at("end").get<bool>()};
  } else if (type == "playback_started") {
    e.payload = ev::AudioPlaybackStarted{j.at("segment").get<std::size_t>(), j.at("text").get<std::string>()};
  } else if (type == "playback_finished") {
    ev::AudioPlaybackFinished p;
    if (!j.at("segment").is_null()) p.segment = j.at("segment").get<std::size_t>();
    p.last = j.at("last").get<bool>();
    e.payload = p;
  } else if (type == "timer_fired") {
    e.payload = ev::TimerFired{j.at("name").get<std::string>()};
  } else if (type == "service_error") {
    e.payload = ev::ServiceError{j.at("stage").get<std::string>(), j.at("cause").get<std::string>()};
  } else {
    throw ParseError("unknown engine event type '" + type + "'");
  }
  return e;
}

inline Json action_to_json(const EngineAction& a) {
  Json j;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, act::RunGate>) {
          j["type"] = "run_gate";
        } else if constexpr (std::is_same_v<T, act::RunCleaner>) {
          j["type"] = "run_cleaner";
          j["text"] = p.text;
        } else if constexpr (std::is_same_v<T, act::RunCompletion>) {
          j["type"] = "run_completion";
          j["text"] = p.text;
          j["silence_ms"] = p.silence_ms;
        } else if constexpr (std::is_same_v<T, act::StartGeneration>) {
          j["type"] = "start_generation";
          j["turn"] = p.turn;
          j["history"] = p.history;
        } else if constexpr (std::is_same_v<T, act::SpeakSegments>) {
          j["type"] = "speak_segments";
          j["turn"] = p.turn;
        } else if constexpr (std::is_same_v<T, act::StopSpeaking>) {
          j["type"] = "stop_speaking";
          j["immediate"] = p.immediate;
        } else if constexpr (std::is_same_v<T, act::AppendLog>) {
          j["type"] = "append_log";
          j["kind"] = p.kind;
          j["payload"] = p.payload;
        } else if constexpr (std::is_same_v<T, act::SetTimer>) {
          j["type"] = "set_timer";
          j["name"] = p.name;
          j["at_ms"] = p.at_ms;
        } else if constexpr (std::is_same_v<T, act::SpeakFallback>) {
          j["type"] = "speak_fallback";
          j["text"] = p.text;
        }
      },
      a);
  return j;
}

// One JSON line per action, each prefixed by the triggering event time.
inline std::string action_log_line(Millis t_ms, const EngineAction& a) {
  Json j = action_to_json(a);
  j["t_ms"] = t_ms;
  return j.dump();
}

// Re-runs step() over a recorded event sequence and renders the action log.
inline std::vector<std::string> replay_actions(std::span<const EngineEvent> events, EngineConfig cfg = {}) {
  std::vector<std::string> lines;
  EngineState state = initial_state(std::move(cfg));
  for (const auto& e : events) {
    auto [next, actions] = step(std::move(state), e);
    state = std::move(next);
    for (const auto& a : actions) lines.push_back(action_log_line(e.t_ms, a));
  }
  return lines;
}

}  // namespace parley
