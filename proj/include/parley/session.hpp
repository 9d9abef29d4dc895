#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <queue>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "parley/agents.hpp"
#include "parley/audio.hpp"
#include "parley/engine.hpp"
#include "parley/services.hpp"
#include "parley/speak.hpp"
#include "parley/store.hpp"

namespace parley {

struct SessionConfig {
  std::string session_id = "session";
  std::string condition;
  std::string started_at;
  std::map<std::string, std::string> metadata;
  ChannelRole asr_channel = ChannelRole::Asr;
  VadConfig vad;
  EngineConfig engine;
  SpeakConfig speak;
  Millis gate_retention_ms = 5000;
  bool log_engine_events = true;
};

struct SessionServices {
  FrameSource& frames;
  AsrSession& asr;
  SpeechGate& gate;
  TranscriptCleaner& cleaner;
  CompletionJudge& completion;
  Responder& responder;
  TtsClient& tts;
  AudioSink* sink = nullptr;
};

class Clock {
 public:
  virtual ~Clock() = default;
  virtual void wait_until(Millis t_ms) = 0;
};

// Time jumps straight to the next event.
class VirtualClock final : public Clock {
 public:
  void wait_until(Millis) override {}
};

class WallClock final : public Clock {
 public:
  WallClock() : t0_(std::chrono::steady_clock::now()) {}
  void wait_until(Millis t_ms) override { std::this_thread::sleep_until(t0_ + std::chrono::milliseconds(t_ms)); }

 private:
  std::chrono::steady_clock::time_point t0_;
};

// Everything the engine saw and did, for replay checks.
struct SessionTrace {
  std::vector<EngineEvent> events;
  std::vector<std::string> action_log;
  std::vector<LatencyTrace> latency;
};

namespace detail {

class SessionDriver {
 public:
  SessionDriver(const SessionConfig& cfg, SessionServices& svc, LogSink& log, Clock& clock, SessionTrace* trace)
      : cfg_(cfg),
        svc_(svc),
        log_(log),
        clock_(clock),
        trace_(trace),
        state_(initial_state(cfg.engine)),
        tracker_(cfg.gate_retention_ms) {
    vad_.config = cfg.vad;
  }

  ConversationSession run(const std::atomic<bool>* stop) {
    ConversationSession session;
    session.id = cfg_.session_id;
    session.condition = cfg_.condition;
    session.started_at = cfg_.started_at;
    session.metadata = cfg_.metadata;
    session.metadata.erase("error");
    log_.record(0, "session_header", session_header_payload(session));

    bool frames_done = false;
    std::optional<AudioFrame> next_frame;
    try {
      for (;;) {
        if (stop && stop->load()) break;
        if (!frames_done && !next_frame) {
          next_frame = pull_frame();
          if (!next_frame) {
            frames_done = true;
            svc_.asr.close();
            enqueue_transcripts(now_);
          }
        }
        if (next_frame && (queue_.empty() || next_frame->t_ms <= queue_.top().t)) {
          process_frame(*next_frame);
          next_frame.reset();
          continue;
        }
        if (queue_.empty()) break;
        Item item = queue_.top();
        queue_.pop();
        now_ = std::max(now_, item.t);
        clock_.wait_until(now_);
        handle(item);
        try_play();
        check_finished();
      }
    } catch (const ServiceError& e) {
      session.metadata["error"] = e.stage() + ": " + e.cause();
      log_.record(now_, "error", {{"stage", e.stage()}, {"cause", e.cause()}, {"fatal", true}});
    }
    session.turns = state_.turns;
    return session;
  }

 private:
  enum Priority { kFrame = 0, kTranscript = 1, kAgent = 2, kReply = 3, kTts = 4, kPlayback = 5, kTimer = 6 };
  enum class Kind { Engine, Token, TtsDone, TtsFail, PlayDone };

  struct Item {
    Millis t = 0;
    int priority = 0;
    std::uint64_t seq = 0;
    Kind kind = Kind::Engine;
    EventPayload payload;
    std::uint64_t gen = 0;
    std::size_t index = 0;
    std::shared_ptr<TtsResult> result;

    bool operator>(const Item& o) const { return std::tie(t, priority, seq) > std::tie(o.t, o.priority, o.seq); }
  };

  void push(Item item) {
    item.seq = seq_++;
    queue_.push(std::move(item));
  }
  void push_event(Millis t, int priority, EventPayload p) {
    Item it;
    it.t = t;
    it.priority = priority;
    it.payload = std::move(p);
    push(std::move(it));
  }

  std::optional<AudioFrame> pull_frame() {
    while (auto f = svc_.frames.next()) {
      if (f->channel == cfg_.asr_channel) return f;
    }
    return std::nullopt;
  }

  void process_frame(const AudioFrame& frame) {
    now_ = std::max(now_, frame.t_ms);
    clock_.wait_until(now_);
    svc_.asr.push(frame);
    enqueue_transcripts(frame.t_ms);
    const bool was_active = vad_.active;
    auto [next, active] = vad_step(vad_, frame);
    vad_ = next;
    if (active || active != was_active) push_event(frame.t_ms, kFrame, ev::FrameVad{active});
  }

  void enqueue_transcripts(Millis floor) {
    for (auto& tt : svc_.asr.drain()) push_event(std::max(tt.at_ms, floor), kTranscript, ev::Transcript{tt.event});
  }

  void handle(const Item& item) {
    switch (item.kind) {
      case Kind::Engine:
        if (const auto* tr = std::get_if<ev::Transcript>(&item.payload)) tracker_.on_transcript(tr->event);
        feed(item.payload);
        break;
      case Kind::Token: {
        if (item.gen != gen_) return;
        const auto& tok = std::get<ev::ReplyToken>(item.payload);
        if (!first_token_t_) first_token_t_ = now_;
        feed(tok);
        if (speaker_ && speaker_reply_gen_ == gen_) {
          dispatch(tok.end ? speaker_->on_end(now_) : speaker_->on_chunk(tok.text, now_));
        } else {
          held_.push_back(tok);
        }
        break;
      }
      case Kind::TtsDone:
        if (speaker_ && item.gen == speaker_gen_) dispatch(speaker_->on_result(std::move(*item.result)));
        break;
      case Kind::TtsFail: {
        if (!speaker_ || item.gen != speaker_gen_) return;
        bool gave_up = false;
        dispatch(speaker_->on_failure(item.index, gave_up));
        if (gave_up) {
          feed(ev::ServiceError{"tts", "segment " + std::to_string(item.index) + " failed twice; fallback silence"});
        }
        break;
      }
      case Kind::PlayDone: {
        if (!speaker_ || item.gen != play_id_) return;
        speaker_->on_playback_finished(now_);
        const bool last = speaker_->finished();
        if (last) finish_reported_ = true;
        feed(ev::AudioPlaybackFinished{item.index, last});
        break;
      }
    }
  }

  void try_play() {
    if (!speaker_) return;
    auto audio = speaker_->next_playback(now_);
    if (!audio) return;
    if (svc_.sink) svc_.sink->play(audio->index, audio->audio, now_);
    Item done;
    done.t = now_ + audio->audio_ms();
    done.priority = kPlayback;
    done.kind = Kind::PlayDone;
    done.gen = ++play_id_;
    done.index = audio->index;
    push(std::move(done));
    feed(ev::AudioPlaybackStarted{audio->index, audio->text});
  }

  void check_finished() {
    if (!speaker_ || finish_reported_ || !speaker_->finished()) return;
    finish_reported_ = true;
    feed(ev::AudioPlaybackFinished{std::nullopt, true});
  }

  void dispatch(const std::vector<TtsRequest>& reqs) {
    for (const auto& r : reqs) {
      Item it;
      it.priority = kTts;
      it.gen = speaker_gen_;
      it.index = r.request_index;
      try {
        auto res = std::make_shared<TtsResult>(svc_.tts.synthesize(r));
        it.t = now_ + res->synth_latency_ms;
        it.kind = Kind::TtsDone;
        it.result = std::move(res);
      } catch (const ServiceError&) {
        it.t = now_;
        it.kind = Kind::TtsFail;
      }
      push(std::move(it));
    }
  }

  void feed(EventPayload payload) {
    EngineEvent e{now_, std::move(payload)};
    if (cfg_.log_engine_events) log_.record(now_, "engine_event", event_to_json(e));
    const std::size_t turns_before = state_.turns.size();
    auto [next, actions] = step(std::move(state_), e);
    state_ = std::move(next);
    if (trace_) trace_->events.push_back(e);
    for (const auto& a : actions) {
      if (trace_) trace_->action_log.push_back(action_log_line(now_, a));
      execute(a);
    }
    if (state_.turns.size() > turns_before) on_turn_complete();
  }

  void on_turn_complete() {
    LatencyTrace t;
    if (speaker_) t = speaker_->trace();
    t.t_generation_start = gen_start_;
    if (first_token_t_) t.t_first_token = first_token_t_;
    t.t_last_audio_out = now_;
    if (trace_) trace_->latency.push_back(t);
    log_.record(now_, "latency_trace", {{"turn", state_.turns.back().index}, {"trace", t}});
  }

  void execute(const EngineAction& action) {
    std::visit(
        [&](const auto& a) {
          using T = std::decay_t<decltype(a)>;
          if constexpr (std::is_same_v<T, act::RunGate>) {
            push_event(now_, kAgent, ev::GateResult{svc_.gate.detect(tracker_window())});
          } else if constexpr (std::is_same_v<T, act::RunCleaner>) {
            push_event(now_, kAgent, ev::Cleaned{svc_.cleaner.clean(a.text, state_.history)});
          } else if constexpr (std::is_same_v<T, act::RunCompletion>) {
            push_event(now_, kAgent, ev::Completion{svc_.completion.assess(a.text, a.silence_ms, state_.history)});
          } else if constexpr (std::is_same_v<T, act::StartGeneration>) {
            start_generation(a.history);
          } else if constexpr (std::is_same_v<T, act::SpeakSegments>) {
            open_speaker();
            auto held = std::exchange(held_, {});
            for (const auto& tok : held) {
              dispatch(tok.end ? speaker_->on_end(now_) : speaker_->on_chunk(tok.text, now_));
            }
          } else if constexpr (std::is_same_v<T, act::SpeakFallback>) {
            ++gen_;  // late tokens of the failed generation are void
            held_.clear();
            open_speaker();
            dispatch(speaker_->speak_text(a.text, now_));
          } else if constexpr (std::is_same_v<T, act::StopSpeaking>) {
            ++gen_;
            held_.clear();
            if (speaker_) {
              const bool was_playing = speaker_->queue().playing();
              speaker_->stop(now_, a.immediate);
              if (a.immediate && was_playing) ++play_id_;  // its finish is reported now
            }
          } else if constexpr (std::is_same_v<T, act::AppendLog>) {
            log_.record(now_, a.kind, a.payload);
          } else if constexpr (std::is_same_v<T, act::SetTimer>) {
            push_event(a.at_ms, kTimer, ev::TimerFired{a.name});
          }
        },
        action);
  }

  GateWindow tracker_window() {
    tracker_.on_vad(vad_.active);
    return tracker_.window(now_);
  }

  void start_generation(const std::vector<Utterance>& history) {
    ++gen_;
    gen_start_ = now_;
    first_token_t_.reset();
    held_.clear();
    speaker_.reset();
    try {
      const TokenStream stream = generate_reply(history, svc_.responder);
      for (const auto& c : stream.chunks) {
        Item it;
        it.t = now_ + c.offset_ms;
        it.priority = kReply;
        it.kind = Kind::Token;
        it.gen = gen_;
        it.payload = ev::ReplyToken{c.text, c.end};
        push(std::move(it));
      }
    } catch (const ServiceError& e) {
      push_event(now_, kAgent, ev::ServiceError{e.stage(), e.cause()});
    }
  }

  void open_speaker() {
    speaker_ = std::make_unique<StreamingSpeaker>(cfg_.speak, gen_start_);
    speaker_gen_ = ++speaker_seq_;
    speaker_reply_gen_ = gen_;
    finish_reported_ = false;
  }

  const SessionConfig& cfg_;
  SessionServices& svc_;
  LogSink& log_;
  Clock& clock_;
  SessionTrace* trace_;

  EngineState state_;
  GateTracker tracker_;
  VadState vad_;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue_;
  std::uint64_t seq_ = 0;
  Millis now_ = 0;

  std::uint64_t gen_ = 0;
  Millis gen_start_ = 0;
  std::optional<Millis> first_token_t_;
  std::vector<ev::ReplyToken> held_;
  std::unique_ptr<StreamingSpeaker> speaker_;
  std::uint64_t speaker_gen_ = 0;
  std::uint64_t speaker_seq_ = 0;
  std::uint64_t speaker_reply_gen_ = 0;
  std::uint64_t play_id_ = 0;
  bool finish_reported_ = false;
};

}  // namespace detail

// Drives step() over the merged event streams until input ends, the queue
// drains, or `stop` is raised. A service failure ends the session early with
// the cause in metadata["error"].
inline ConversationSession run_session(const SessionConfig& cfg, SessionServices& svc, LogSink& log, Clock& clock,
                                       SessionTrace* trace = nullptr, const std::atomic<bool>* stop = nullptr) {
  detail::SessionDriver driver(cfg, svc, log, clock, trace);
  return driver.run(stop);
}

// Rebuilds every per-turn latency trace from the engine event log alone.
inline std::vector<LatencyTrace> derive_latency_traces(std::span<const EngineEvent> events, const EngineConfig& ecfg,
                                                       const SpeakConfig& scfg) {
  std::vector<LatencyTrace> out;
  EngineState state = initial_state(ecfg);
  LatencyTrace cur;
  std::optional<SentenceSegmenter> seg;
  bool open = false;
  std::string batch;
  std::vector<ev::ReplyToken> held;
  bool stopped = false;

  auto feed_token = [&](const ev::ReplyToken& tok, Millis t) {
    if (scfg.mode == SpeakMode::Batch) {
      if (!tok.end) {
        batch += tok.text;
        return;
      }
      if (!text::trim(batch).empty() && !cur.t_first_sentence_closed) cur.t_first_sentence_closed = t;
      return;
    }
    bool closed = tok.end ? seg->flush().has_value() : !seg->push(tok.text).empty();
    if (closed && !cur.t_first_sentence_closed) cur.t_first_sentence_closed = t;
  };

  for (const auto& e : events) {
    if (const auto* tok = std::get_if<ev::ReplyToken>(&e.payload); tok && !stopped) {
      if (!cur.t_first_token) cur.t_first_token = e.t_ms;
      if (open) feed_token(*tok, e.t_ms);
      else held.push_back(*tok);
    }
    if (const auto* p = std::get_if<ev::AudioPlaybackStarted>(&e.payload); p && !cur.t_first_audio_out) {
      cur.t_first_audio_out = e.t_ms;
    }
    const std::size_t turns_before = state.turns.size();
    auto [next, actions] = step(std::move(state), e);
    state = std::move(next);
    for (const auto& a : actions) {
      if (std::holds_alternative<act::StartGeneration>(a)) {
        cur = LatencyTrace{};
        cur.t_generation_start = e.t_ms;
        seg.reset();
        open = false;
        batch.clear();
        held.clear();
        stopped = false;
      } else if (std::holds_alternative<act::SpeakSegments>(a)) {
        seg.emplace(scfg.segmenter);
        open = true;
        for (const auto& tok : std::exchange(held, {})) feed_token(tok, e.t_ms);
      } else if (const auto* f = std::get_if<act::SpeakFallback>(&a)) {
        stopped = true;  // tokens of the failed generation are ignored
        if (!cur.t_first_token) cur.t_first_token = e.t_ms;
        if (!text::trim(f->text).empty() && !cur.t_first_sentence_closed) cur.t_first_sentence_closed = e.t_ms;
      } else if (std::holds_alternative<act::StopSpeaking>(a)) {
        stopped = true;
      }
    }
    if (state.turns.size() > turns_before) {
      cur.t_last_audio_out = e.t_ms;
      out.push_back(cur);
    }
  }
  return out;
}

}  // namespace parley
