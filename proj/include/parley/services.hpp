#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "parley/core.hpp"
#include "parley/error.hpp"
#include "parley/text.hpp"

namespace parley {

// ─── ASR ─────────────────────────────────────────────────────────────────────

struct AsrConfig {
  std::string endpoint;
  std::string language = "en-US";
  bool interim_results = true;
};

struct TimedTranscript {
  Millis at_ms = 0;  // emission time
  TranscriptEvent event;
};

// Single writer pushes audio, single reader drains transcripts. Emission
// order is guarded: an event whose t_start_ms precedes the previous one is a
// contract violation of the adapter, not something to pass downstream.
class AsrSession {
 public:
  virtual ~AsrSession() = default;

  void push(const AudioFrame& frame) {
    if (closed_) throw SessionClosedError();
    on_push(frame);
  }

  void close() {
    if (!closed_) on_close();
    closed_ = true;
  }
  bool closed() const { return closed_; }

  // Events emitted since the last drain, each stamped with its emission time.
  std::vector<TimedTranscript> drain() {
    std::vector<TimedTranscript> out(pending_.begin(), pending_.end());
    pending_.clear();
    return out;
  }

 protected:
  virtual void on_push(const AudioFrame& frame) = 0;
  virtual void on_close() {}

  void emit(Millis at_ms, TranscriptEvent event) {
    if (last_start_ && event.t_start_ms < *last_start_) {
      throw ContractError("ASR emitted out-of-order transcript (t_start " +
                          std::to_string(event.t_start_ms) + " < " +
                          std::to_string(*last_start_) + ")");
    }
    last_start_ = event.t_start_ms;
    pending_.push_back({at_ms, std::move(event)});
  }

 private:
  bool closed_ = false;
  std::optional<Millis> last_start_;
  std::deque<TimedTranscript> pending_;
};

struct MockAsrScript {
  std::vector<TimedTranscript> events;
  // Injected transport failure once pushed audio reaches this time.
  std::optional<Millis> fail_at_ms;
};

class MockAsrSession final : public AsrSession {
 public:
  explicit MockAsrSession(MockAsrScript script) : script_(std::move(script)) {
    std::stable_sort(script_.events.begin(), script_.events.end(),
                     [](const auto& a, const auto& b) { return a.at_ms < b.at_ms; });
  }

 protected:
  void on_push(const AudioFrame& frame) override {
    const Millis reached = frame.end_ms();
    if (script_.fail_at_ms && reached >= *script_.fail_at_ms) {
      throw TransportError("asr", "connection lost at " + std::to_string(*script_.fail_at_ms) + " ms");
    }
    while (next_ < script_.events.size() && script_.events[next_].at_ms <= reached) {
      emit(script_.events[next_].at_ms, script_.events[next_].event);
      ++next_;
    }
  }

 private:
  MockAsrScript script_;
  std::size_t next_ = 0;
};

// ─── Chat ────────────────────────────────────────────────────────────────────

struct ChatMessage {
  std::string role;  // "system", "user", "assistant"
  std::string text;
};

struct ChatRequest {
  std::string system_prompt;
  std::vector<ChatMessage> messages;
  double temperature = 0.7;
};

struct TokenChunk {
  std::string text;
  Millis offset_ms = 0;  // arrival time relative to the request
  bool end = false;
};

// Ordered reply chunks closed by exactly one end marker.
struct TokenStream {
  std::vector<TokenChunk> chunks;

  std::string text() const {
    std::string out;
    for (const auto& c : chunks) out += c.text;
    return out;
  }

  bool well_formed() const {
    if (chunks.empty() || !chunks.back().end) return false;
    const auto ends = std::count_if(chunks.begin(), chunks.end(), [](const auto& c) { return c.end; });
    for (std::size_t i = 1; i < chunks.size(); ++i) {
      if (chunks[i].offset_ms < chunks[i - 1].offset_ms) return false;
    }
    return ends == 1;
  }
};

enum class Chunking { Word, Whole };

// Splits text into word chunks (each word carries its leading whitespace)
// arriving first_token_ms after the request and per_token_ms apart.
inline TokenStream make_token_stream(std::string_view text, Chunking chunking,
                                     Millis first_token_ms, Millis per_token_ms) {
  TokenStream ts;
  Millis t = first_token_ms;
  if (chunking == Chunking::Whole) {
    if (!text.empty()) ts.chunks.push_back({std::string(text), t, false});
  } else {
    std::size_t i = 0;
    while (i < text.size()) {
      std::size_t j = i;
      while (j < text.size() && text::is_space(text[j])) ++j;
      while (j < text.size() && !text::is_space(text[j])) ++j;
      ts.chunks.push_back({std::string(text.substr(i, j - i)), t, false});
      t += per_token_ms;
      i = j;
    }
    if (!ts.chunks.empty()) t -= per_token_ms;
  }
  ts.chunks.push_back({"", t, true});
  return ts;
}

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual TokenStream chat(const ChatRequest& request) = 0;
};

inline void check_chat_request(const ChatRequest& request) {
  if (request.messages.empty()) throw ContractError("chat: request has no messages");
}

struct MockLlmScript {
  std::vector<std::string> replies;  // consumed round-robin, one per call
  Chunking chunking = Chunking::Word;
  Millis first_token_ms = 300;
  Millis per_token_ms = 40;
  std::set<int> fail_calls;  // 0-based call numbers that raise a service error
};

class MockChatClient final : public ChatClient {
 public:
  explicit MockChatClient(MockLlmScript script) : script_(std::move(script)) {}

  TokenStream chat(const ChatRequest& request) override {
    check_chat_request(request);
    std::lock_guard lock(mu_);
    const int call = calls_++;
    if (script_.fail_calls.count(call)) throw ServiceError("llm", "injected failure on call " + std::to_string(call));
    const std::string reply =
        script_.replies.empty() ? std::string() : script_.replies[static_cast<std::size_t>(call) % script_.replies.size()];
    return make_token_stream(reply, script_.chunking, script_.first_token_ms, script_.per_token_ms);
  }

  int calls() const {
    std::lock_guard lock(mu_);
    return calls_;
  }

 private:
  MockLlmScript script_;
  mutable std::mutex mu_;
  int calls_ = 0;
};

// ─── TTS ─────────────────────────────────────────────────────────────────────

struct TtsRequest {
  std::string text;
  std::string voice;
  std::size_t request_index = 0;
};

struct TtsResult {
  std::size_t request_index = 0;
  std::vector<std::int16_t> audio;  // 16 kHz mono PCM
  Millis synth_latency_ms = 0;

  Millis audio_ms() const { return static_cast<Millis>(audio.size()) / kSamplesPerMs; }
};

class TtsClient {
 public:
  virtual ~TtsClient() = default;
  virtual TtsResult synthesize(const TtsRequest& request) = 0;
};

struct FixedLatency {
  Millis ms = 200;
};

// Integer-uniform on [lo, hi], drawn as lo + engine() % (hi - lo + 1) so the
// sequence depends only on mt19937_64, which is fully specified.
struct UniformLatency {
  Millis lo = 100;
  Millis hi = 300;
  std::uint64_t seed = 0;
};

using LatencyModel = std::variant<FixedLatency, UniformLatency>;

struct MockTtsScript {
  LatencyModel latency = FixedLatency{};
  Millis per_char_ms = 50;
  bool tone = false;  // silence otherwise
  // Request indices that fail; each entry fails `failures_per_index` times.
  std::set<std::size_t> fail_indices;
  int failures_per_index = 1;
};

class MockTtsClient final : public TtsClient {
 public:
  explicit MockTtsClient(MockTtsScript script) : script_(std::move(script)) {
    if (auto* u = std::get_if<UniformLatency>(&script_.latency)) {
      if (u->hi < u->lo) throw ContractError("uniform latency: hi < lo");
      rng_.seed(u->seed);
    }
  }

  TtsResult synthesize(const TtsRequest& request) override {
    if (text::trim(request.text).empty()) throw ContractError("synthesize: empty sentence");
    std::lock_guard lock(mu_);
    if (script_.fail_indices.count(request.request_index) &&
        failures_[request.request_index]++ < script_.failures_per_index) {
      throw ServiceError("tts", "injected failure for request " + std::to_string(request.request_index));
    }
    TtsResult r;
    r.request_index = request.request_index;
    r.synth_latency_ms = draw_latency();
    const Millis ms = static_cast<Millis>(request.text.size()) * script_.per_char_ms;
    r.audio.assign(static_cast<std::size_t>(ms * kSamplesPerMs), 0);
    if (script_.tone) {
      for (std::size_t i = 0; i < r.audio.size(); ++i) r.audio[i] = (i / 16) % 2 ? 4000 : -4000;
    }
    return r;
  }

 private:
  Millis draw_latency() {
    if (const auto* f = std::get_if<FixedLatency>(&script_.latency)) return f->ms;
    const auto& u = std::get<UniformLatency>(script_.latency);
    const auto span = static_cast<std::uint64_t>(u.hi - u.lo + 1);
    return u.lo + static_cast<Millis>(rng_() % span);
  }

  MockTtsScript script_;
  std::mutex mu_;
  std::mt19937_64 rng_;
  std::map<std::size_t, int> failures_;
};

// ─── Mock script JSON ────────────────────────────────────────────────────────

inline void from_json(const Json& j, TimedTranscript& s) {
  s.at_ms = j.at("at_ms").get<Millis>();
  s.event = j.get<TranscriptEvent>();
}

inline void from_json(const Json& j, MockAsrScript& s) {
  s.events = j.value("events", Json::array()).get<std::vector<TimedTranscript>>();
  s.fail_at_ms.reset();
  if (j.contains("fail_at_ms")) s.fail_at_ms = j.at("fail_at_ms").get<Millis>();
}

inline Chunking chunking_from_string(const std::string& s) {
  if (s == "word") return Chunking::Word;
  if (s == "whole") return Chunking::Whole;
  throw ParseError("unknown chunking '" + s + "'");
}

inline void from_json(const Json& j, MockLlmScript& s) {
  s.replies = j.value("replies", std::vector<std::string>{});
  s.chunking = chunking_from_string(j.value("chunking", std::string("word")));
  s.first_token_ms = j.value("first_token_ms", Millis{300});
  s.per_token_ms = j.value("per_token_ms", Millis{40});
  s.fail_calls = j.value("fail_calls", std::set<int>{});
}

inline LatencyModel latency_model_from_json(const Json& j, std::uint64_t default_seed) {
  const auto model = j.value("model", std::string("fixed"));
  if (model == "fixed") return FixedLatency{j.value("ms", Millis{200})};
  if (model == "uniform") {
    return UniformLatency{j.value("lo", Millis{100}), j.value("hi", Millis{300}),
                          j.value("seed", default_seed)};
  }
  throw ParseError("unknown latency model '" + model + "'");
}

inline MockTtsScript mock_tts_script_from_json(const Json& j, std::uint64_t default_seed) {
  MockTtsScript s;
  if (j.contains("latency")) s.latency = latency_model_from_json(j.at("latency"), default_seed);
  s.per_char_ms = j.value("per_char_ms", Millis{50});
  s.tone = j.value("tone", false);
  s.fail_indices = j.value("fail_indices", std::set<std::size_t>{});
  s.failures_per_index = j.value("failures_per_index", 1);
  return s;
}

}  // namespace parley
