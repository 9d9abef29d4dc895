#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "parley/error.hpp"
#include "parley/text.hpp"

namespace parley {

using Millis = std::int64_t;
using Json = nlohmann::json;

inline constexpr int kSampleRateHz = 16000;
inline constexpr int kSamplesPerMs = kSampleRateHz / 1000;

// ─── Channels ────────────────────────────────────────────────────────────────

// Output roles of the six-channel microphone array: four raw capsules, the
// processed ASR beam and the echo-cancelled stream.
enum class ChannelRole { Raw0, Raw1, Raw2, Raw3, Asr, Aec };

inline constexpr std::array<ChannelRole, 6> kAllChannelRoles = {
    ChannelRole::Raw0, ChannelRole::Raw1, ChannelRole::Raw2,
    ChannelRole::Raw3, ChannelRole::Asr,  ChannelRole::Aec};

inline std::string_view to_string(ChannelRole r) {
  switch (r) {
    case ChannelRole::Raw0: return "raw0";
    case ChannelRole::Raw1: return "raw1";
    case ChannelRole::Raw2: return "raw2";
    case ChannelRole::Raw3: return "raw3";
    case ChannelRole::Asr: return "asr";
    case ChannelRole::Aec: return "aec";
  }
  return "?";
}

inline ChannelRole channel_role_from_string(std::string_view s) {
  for (auto r : kAllChannelRoles) {
    if (to_string(r) == s) return r;
  }
  throw ParseError("unknown channel role '" + std::string(s) + "'");
}

struct AudioFrame {
  Millis t_ms = 0;
  ChannelRole channel = ChannelRole::Asr;
  std::vector<std::int16_t> samples;
  int sample_rate_hz = kSampleRateHz;
  // Final frame of a stream, zero-padded up to the frame length.
  bool padded = false;

  Millis duration_ms() const {
    return static_cast<Millis>(samples.size()) * 1000 / sample_rate_hz;
  }
  Millis end_ms() const { return t_ms + duration_ms(); }

  bool operator==(const AudioFrame&) const = default;
};

// ─── Dialogue record ─────────────────────────────────────────────────────────

struct TranscriptEvent {
  enum class Kind { Interim, Final };

  Kind kind = Kind::Interim;
  std::string text;
  Millis t_start_ms = 0;
  Millis t_end_ms = 0;
  std::optional<double> confidence;

  bool is_final() const { return kind == Kind::Final; }
  bool operator==(const TranscriptEvent&) const = default;
};

enum class Speaker { User, Robot };

inline std::string_view to_string(Speaker s) { return s == Speaker::User ? "user" : "robot"; }

inline Speaker speaker_from_string(std::string_view s) {
  if (s == "user") return Speaker::User;
  if (s == "robot") return Speaker::Robot;
  throw ParseError("unknown speaker '" + std::string(s) + "'");
}

struct Utterance {
  Speaker speaker = Speaker::User;
  std::string text;
  Millis t_start_ms = 0;
  Millis t_end_ms = 0;
  int word_count = 0;

  bool operator==(const Utterance&) const = default;
};

inline Utterance make_utterance(Speaker speaker, std::string text, Millis start, Millis end) {
  Utterance u{speaker, std::move(text), start, end, 0};
  u.word_count = text::word_count(u.text);
  return u;
}

struct Turn {
  int index = 0;
  Utterance user;
  Utterance robot;
  Millis response_latency_ms = 0;

  bool operator==(const Turn&) const = default;
};

struct ConversationSession {
  std::string id;
  std::string condition;
  std::vector<Turn> turns;
  std::string started_at;  // wall-clock, ISO-8601; informational only
  std::map<std::string, std::string> metadata;

  bool operator==(const ConversationSession&) const = default;
};

struct SourceEvent {
  Millis t_ms = 0;
  int source_id = 0;
  std::array<double, 3> direction{0.0, 0.0, 1.0};
  double activity = 0.0;

  bool operator==(const SourceEvent&) const = default;
};

// ─── Latency ─────────────────────────────────────────────────────────────────

struct ResponseLatency {
  Millis ms = 0;
  // Robot audio started before the user finished.
  bool interruption = false;
};

// Gap between the end of the user's final transcript and the first robot
// audio sample.
inline ResponseLatency response_latency(Millis user_end_ms, Millis robot_start_ms) {
  if (user_end_ms < 0 || robot_start_ms < 0) {
    throw ContractError("response_latency: timestamps must be non-negative");
  }
  const Millis gap = robot_start_ms - user_end_ms;
  return {gap, gap < 0};
}

// ─── Validation ──────────────────────────────────────────────────────────────

struct Violation {
  std::optional<int> turn;  // absent for session-level problems
  std::string rule;

  bool operator==(const Violation&) const = default;
};

namespace detail {

inline void check_utterance(const Utterance& u, Speaker expected, int turn,
                            std::vector<Violation>& out) {
  const std::string who(to_string(expected));
  if (u.speaker != expected) out.push_back({turn, who + " utterance has wrong speaker"});
  if (u.t_start_ms > u.t_end_ms) out.push_back({turn, who + " utterance ends before it starts"});
  if (u.word_count != text::word_count(u.text)) {
    out.push_back({turn, who + " word count mismatch"});
  }
}

}  // namespace detail

inline std::vector<Violation> validate_session(const ConversationSession& session) {
  std::vector<Violation> out;
  int expected = 0;
  for (const auto& turn : session.turns) {
    if (turn.index != expected) {
      out.push_back({turn.index, "index gap at " + std::to_string(expected)});
    }
    expected = turn.index + 1;

    detail::check_utterance(turn.user, Speaker::User, turn.index, out);
    detail::check_utterance(turn.robot, Speaker::Robot, turn.index, out);

    const Millis gap = turn.robot.t_start_ms - turn.user.t_end_ms;
    if (gap < 0) {
      out.push_back({turn.index, "negative latency"});
    } else if (turn.response_latency_ms != gap) {
      out.push_back({turn.index, "latency does not match utterance timestamps"});
    }
  }
  return out;
}

// ─── JSON encodings ──────────────────────────────────────────────────────────

inline std::string_view to_string(TranscriptEvent::Kind k) {
  return k == TranscriptEvent::Kind::Final ? "final" : "interim";
}

inline TranscriptEvent::Kind transcript_kind_from_string(std::string_view s) {
  if (s == "final") return TranscriptEvent::Kind::Final;
  if (s == "interim") return TranscriptEvent::Kind::Interim;
  throw ParseError("unknown transcript kind '" + std::string(s) + "'");
}

inline void to_json(Json& j, const TranscriptEvent& e) {
  j = Json{{"kind", to_string(e.kind)},
           {"text", e.text},
           {"t_start_ms", e.t_start_ms},
           {"t_end_ms", e.t_end_ms}};
  if (e.confidence) j["confidence"] = *e.confidence;
}

inline void from_json(const Json& j, TranscriptEvent& e) {
  e.kind = transcript_kind_from_string(j.at("kind").get<std::string>());
  e.text = j.at("text").get<std::string>();
  e.t_start_ms = j.at("t_start_ms").get<Millis>();
  e.t_end_ms = j.at("t_end_ms").get<Millis>();
  e.confidence.reset();
  if (auto it = j.find("confidence"); it != j.end() && !it->is_null()) {
    e.confidence = it->get<double>();
  }
}

inline void to_json(Json& j, const Utterance& u) {
  j = Json{{"speaker", to_string(u.speaker)},
           {"text", u.text},
           {"t_start_ms", u.t_start_ms},
           {"t_end_ms", u.t_end_ms},
           {"word_count", u.word_count}};
}

inline void from_json(const Json& j, Utterance& u) {
  u.speaker = speaker_from_string(j.at("speaker").get<std::string>());
  u.text = j.at("text").get<std::string>();
  u.t_start_ms = j.at("t_start_ms").get<Millis>();
  u.t_end_ms = j.at("t_end_ms").get<Millis>();
  u.word_count = j.at("word_count").get<int>();
}

inline void to_json(Json& j, const Turn& t) {
  j = Json{{"index", t.index},
           {"user", t.user},
           {"robot", t.robot},
           {"response_latency_ms", t.response_latency_ms}};
}

inline void from_json(const Json& j, Turn& t) {
  t.index = j.at("index").get<int>();
  t.user = j.at("user").get<Utterance>();
  t.robot = j.at("robot").get<Utterance>();
  t.response_latency_ms = j.at("response_latency_ms").get<Millis>();
}

inline void to_json(Json& j, const ConversationSession& s) {
  j = Json{{"id", s.id},
           {"condition", s.condition},
           {"turns", s.turns},
           {"started_at", s.started_at},
           {"metadata", s.metadata}};
}

inline void from_json(const Json& j, ConversationSession& s) {
  s.id = j.at("id").get<std::string>();
  s.condition = j.at("condition").get<std::string>();
  s.turns = j.at("turns").get<std::vector<Turn>>();
  s.started_at = j.at("started_at").get<std::string>();
  s.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
}

}  // namespace parley
