#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "parley/core.hpp"
#include "parley/segmenter.hpp"
#include "parley/services.hpp"

namespace parley {

struct LatencyTrace {
  std::optional<Millis> t_generation_start;
  std::optional<Millis> t_first_token;
  std::optional<Millis> t_first_sentence_closed;
  std::optional<Millis> t_first_audio_out;
  std::optional<Millis> t_last_audio_out;

  bool operator==(const LatencyTrace&) const = default;

  bool ordered() const {
    std::optional<Millis> prev;
    for (const auto& v : {t_generation_start, t_first_token, t_first_sentence_closed,
                          t_first_audio_out, t_last_audio_out}) {
      if (!v) continue;
      if (prev && *v < *prev) return false;
      prev = v;
    }
    return true;
  }
};

inline void to_json(Json& j, const LatencyTrace& t) {
  auto opt = [](const std::optional<Millis>& v) { return v ? Json(*v) : Json(nullptr); };
  j = Json{{"t_generation_start", opt(t.t_generation_start)},
           {"t_first_token", opt(t.t_first_token)},
           {"t_first_sentence_closed", opt(t.t_first_sentence_closed)},
           {"t_first_audio_out", opt(t.t_first_audio_out)},
           {"t_last_audio_out", opt(t.t_last_audio_out)}};
}

inline void from_json(const Json& j, LatencyTrace& t) {
  auto opt = [&](const char* k) -> std::optional<Millis> {
    auto it = j.find(k);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<Millis>();
  };
  t.t_generation_start = opt("t_generation_start");
  t.t_first_token = opt("t_first_token");
  t.t_first_sentence_closed = opt("t_first_sentence_closed");
  t.t_first_audio_out = opt("t_first_audio_out");
  t.t_last_audio_out = opt("t_last_audio_out");
}

enum class SpeakMode { Streamed, Batch };

struct SpeakConfig {
  SpeakMode mode = SpeakMode::Streamed;
  std::size_t max_inflight = 2;
  std::string voice = "default";
  Millis fallback_silence_ms = 500;
  SegmenterConfig segmenter;
};

// ─── Ordered playback ────────────────────────────────────────────────────────

struct ReadyAudio {
  std::size_t index = 0;
  std::string text;
  std::vector<std::int16_t> audio;
  bool fallback = false;  // synthesis failed twice; audio is silence

  Millis audio_ms() const { return static_cast<Millis>(audio.size()) / kSamplesPerMs; }
};

// Bounded in-flight synthesis with strictly ordered release. Results may
// complete in any order; audio for index k is released only after every
// index below k has been released and played.
class PlaybackQueue {
 public:
  explicit PlaybackQueue(std::size_t max_inflight, Millis fallback_silence_ms = 500)
      : max_inflight_(max_inflight), fallback_ms_(fallback_silence_ms) {
    if (max_inflight_ < 1) throw ContractError("max_inflight must be >= 1");
  }

  // Queues a request; returns those that may be dispatched now.
  std::vector<TtsRequest> enqueue(TtsRequest req) {
    if (stopped_) return {};
    texts_[req.request_index] = req.text;
    waiting_.push_back(std::move(req));
    ++submitted_;
    return admit();
  }

  std::vector<TtsRequest> on_result(TtsResult result) {
    const auto idx = result.request_index;
    release_slot(idx);
    if (!stopped_) {
      buffered_[idx] = ReadyAudio{idx, texts_[idx], std::move(result.audio), false};
    }
    return admit();
  }

  // First failure re-dispatches the request (slot kept); the second gives up
  // and buffers fallback silence so later indices are not blocked.
  std::vector<TtsRequest> on_failure(std::size_t index, bool& gave_up) {
    gave_up = false;
    if (++attempts_[index] < 2 && !stopped_) {
      return {TtsRequest{texts_[index], voice_, index}};
    }
    gave_up = true;
    release_slot(index);
    if (!stopped_) {
      buffered_[index] = ReadyAudio{index, texts_[index],
                                    std::vector<std::int16_t>(static_cast<std::size_t>(fallback_ms_ * kSamplesPerMs), 0),
                                    true};
    }
    return admit();
  }

  // Next audio in order, if it is ready and nothing is playing.
  std::optional<ReadyAudio> take_next() {
    if (playing_ || stopped_) return std::nullopt;
    auto it = buffered_.find(next_index_to_play_);
    if (it == buffered_.end()) return std::nullopt;
    ReadyAudio out = std::move(it->second);
    buffered_.erase(it);
    playing_ = true;
    return out;
  }

  void on_played() {
    if (!playing_) throw ContractError("on_played without active playback");
    playing_ = false;
    ++next_index_to_play_;
  }

  void end_of_input() { input_ended_ = true; }

  // Drops queued work; nothing further is released.
  void stop() {
    stopped_ = true;
    waiting_.clear();
    buffered_.clear();
  }

  void set_voice(std::string v) { voice_ = std::move(v); }

  bool playing() const { return playing_; }
  bool stopped() const { return stopped_; }
  bool finished() const {
    if (stopped_) return !playing_;
    return input_ended_ && !playing_ && next_index_to_play_ == submitted_;
  }
  bool is_last(std::size_t index) const { return input_ended_ && index + 1 == submitted_; }
  std::size_t inflight() const { return inflight_; }
  std::size_t max_inflight_observed() const { return max_observed_; }
  std::size_t next_index_to_play() const { return next_index_to_play_; }

 private:
  std::vector<TtsRequest> admit() {
    std::vector<TtsRequest> out;
    while (!stopped_ && inflight_ < max_inflight_ && !waiting_.empty()) {
      out.push_back(std::move(waiting_.front()));
      waiting_.pop_front();
      ++inflight_;
      max_observed_ = std::max(max_observed_, inflight_);
    }
    return out;
  }

  void release_slot(std::size_t) {
    if (inflight_ == 0) throw ContractError("TTS completion without an outstanding request");
    --inflight_;
  }

  std::size_t max_inflight_;
  Millis fallback_ms_;
  std::string voice_;
  std::deque<TtsRequest> waiting_;
  std::map<std::size_t, ReadyAudio> buffered_;
  std::map<std::size_t, std::string> texts_;
  std::map<std::size_t, int> attempts_;
  std::size_t inflight_ = 0;
  std::size_t max_observed_ = 0;
  std::size_t submitted_ = 0;
  std::size_t next_index_to_play_ = 0;
  bool playing_ = false;
  bool input_ended_ = false;
  bool stopped_ = false;
};

// ─── Streaming speaker ───────────────────────────────────────────────────────

// Segmentation, dispatch and ordered playback for one reply. Clock-agnostic:
// every call carries the caller's current time, and the caller owns TTS
// execution and playback timing.
class StreamingSpeaker {
 public:
  StreamingSpeaker(SpeakConfig cfg, Millis generation_start)
      : cfg_(std::move(cfg)), segmenter_(cfg_.segmenter), queue_(cfg_.max_inflight, cfg_.fallback_silence_ms) {
    queue_.set_voice(cfg_.voice);
    trace_.t_generation_start = generation_start;
  }

  std::vector<TtsRequest> on_chunk(std::string_view chunk, Millis now) {
    if (!trace_.t_first_token) trace_.t_first_token = now;
    if (cfg_.mode == SpeakMode::Batch) {
      batch_text_ += chunk;
      return {};
    }
    return submit(segmenter_.push(chunk), now);
  }

  std::vector<TtsRequest> on_end(Millis now) {
    if (!trace_.t_first_token) trace_.t_first_token = now;
    std::vector<SentenceSegment> tail;
    if (cfg_.mode == SpeakMode::Batch) {
      const auto body = text::trim(batch_text_);
      if (!body.empty()) tail.push_back({0, std::string(body), true});
    } else if (auto seg = segmenter_.flush()) {
      tail.push_back(std::move(*seg));
    }
    auto out = submit(std::move(tail), now);
    queue_.end_of_input();
    return out;
  }

  // Speaks a single fixed sentence (fallback path); the stream is closed.
  std::vector<TtsRequest> speak_text(std::string_view sentence, Millis now) {
    if (!trace_.t_first_token) trace_.t_first_token = now;
    auto out = submit({SentenceSegment{0, std::string(sentence), true}}, now);
    queue_.end_of_input();
    return out;
  }

  std::vector<TtsRequest> on_result(TtsResult r) { return queue_.on_result(std::move(r)); }
  std::vector<TtsRequest> on_failure(std::size_t index, bool& gave_up) { return queue_.on_failure(index, gave_up); }

  std::optional<ReadyAudio> next_playback(Millis now) {
    auto next = queue_.take_next();
    if (next && !trace_.t_first_audio_out) trace_.t_first_audio_out = now;
    return next;
  }

  void on_playback_finished(Millis now) {
    queue_.on_played();
    trace_.t_last_audio_out = now;
  }

  void stop(Millis now, bool cut_current) {
    queue_.stop();
    if (cut_current && queue_.playing()) {
      queue_.on_played();
      trace_.t_last_audio_out = now;
    }
  }

  bool is_last(std::size_t index) const { return queue_.is_last(index); }
  bool finished() const { return queue_.finished(); }
  bool stopped() const { return queue_.stopped(); }
  const LatencyTrace& trace() const { return trace_; }
  const std::vector<SentenceSegment>& segments() const { return segments_; }
  const PlaybackQueue& queue() const { return queue_; }

 private:
  std::vector<TtsRequest> submit(std::vector<SentenceSegment> segs, Millis now) {
    std::vector<TtsRequest> out;
    for (auto& s : segs) {
      if (!trace_.t_first_sentence_closed) trace_.t_first_sentence_closed = now;
      auto admitted = queue_.enqueue(TtsRequest{s.text, cfg_.voice, s.index});
      out.insert(out.end(), admitted.begin(), admitted.end());
      segments_.push_back(std::move(s));
    }
    return out;
  }

  SpeakConfig cfg_;
  SentenceSegmenter segmenter_;
  PlaybackQueue queue_;
  LatencyTrace trace_;
  std::string batch_text_;
  std::vector<SentenceSegment> segments_;
};

// ─── Sinks ───────────────────────────────────────────────────────────────────

class AudioSink {
 public:
  virtual ~AudioSink() = default;
  virtual void play(std::size_t index, std::span<const std::int16_t> audio, Millis t_ms) = 0;
};

class NullAudioSink final : public AudioSink {
 public:
  void play(std::size_t, std::span<const std::int16_t>, Millis) override {}
};

// Appends everything played to one mono buffer (e.g. for writing a WAV).
class BufferAudioSink final : public AudioSink {
 public:
  void play(std::size_t, std::span<const std::int16_t> audio, Millis) override {
    std::lock_guard lock(mu_);
    pcm_.insert(pcm_.end(), audio.begin(), audio.end());
  }
  std::vector<std::int16_t> pcm() const {
    std::lock_guard lock(mu_);
    return pcm_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<std::int16_t> pcm_;
};

// ─── Virtual-clock scheduling ────────────────────────────────────────────────

struct Emission {
  std::size_t index = 0;
  Millis start_ms = 0;
  Millis end_ms = 0;
  bool fallback = false;
};

struct SpeakRun {
  std::vector<Emission> emissions;
  std::vector<SentenceSegment> segments;
  LatencyTrace trace;
  std::size_t max_inflight_observed = 0;
  std::size_t fallbacks = 0;
};

// Plays one token stream through `tts` on a virtual clock starting at
// `generation_start`. Chunk arrival times come from the stream's offsets,
// synthesis completes after the reported latency, and audio occupies the
// sink for its duration.
inline SpeakRun simulate_speak(const TokenStream& stream, TtsClient& tts, const SpeakConfig& cfg,
                               Millis generation_start = 0, AudioSink* sink = nullptr) {
  enum Kind { Done = 0, Played = 1, Chunk = 2 };
  struct Ev {
    Millis t;
    int kind;
    std::uint64_t seq;
    std::size_t payload;
    bool operator>(const Ev& o) const { return std::tie(t, kind, seq) > std::tie(o.t, o.kind, o.seq); }
  };
  std::priority_queue<Ev, std::vector<Ev>, std::greater<>> q;
  std::uint64_t seq = 0;
  std::map<std::uint64_t, std::pair<bool, TtsResult>> completions;  // ok?, result

  for (std::size_t i = 0; i < stream.chunks.size(); ++i) {
    q.push({generation_start + stream.chunks[i].offset_ms, Chunk, seq++, i});
  }

  StreamingSpeaker speaker(cfg, generation_start);
  SpeakRun run;

  auto dispatch = [&](const std::vector<TtsRequest>& reqs, Millis now) {
    for (const auto& r : reqs) {
      const auto id = seq++;
      try {
        TtsResult res = tts.synthesize(r);
        const Millis done = now + res.synth_latency_ms;
        completions[id] = {true, std::move(res)};
        q.push({done, Done, id, r.request_index});
      } catch (const ServiceError&) {
        completions[id] = {false, TtsResult{r.request_index, {}, 0}};
        q.push({now, Done, id, r.request_index});
      }
    }
  };
  auto try_play = [&](Millis now) {
    if (auto audio = speaker.next_playback(now)) {
      const Millis end = now + audio->audio_ms();
      if (sink) sink->play(audio->index, audio->audio, now);
      run.emissions.push_back({audio->index, now, end, audio->fallback});
      if (audio->fallback) ++run.fallbacks;
      q.push({end, Played, seq++, audio->index});
    }
  };

  while (!q.empty()) {
    const Ev ev = q.top();
    q.pop();
    switch (ev.kind) {
      case Chunk: {
        const auto& c = stream.chunks[ev.payload];
        dispatch(c.end ? speaker.on_end(ev.t) : speaker.on_chunk(c.text, ev.t), ev.t);
        break;
      }
      case Done: {
        auto node = completions.extract(ev.seq);
        auto& [ok, res] = node.mapped();
        if (ok) {
          dispatch(speaker.on_result(std::move(res)), ev.t);
        } else {
          bool gave_up = false;
          dispatch(speaker.on_failure(ev.payload, gave_up), ev.t);
        }
        break;
      }
      case Played:
        speaker.on_playback_finished(ev.t);
        break;
    }
    try_play(ev.t);
  }
  run.segments = speaker.segments();
  run.trace = speaker.trace();
  run.max_inflight_observed = speaker.queue().max_inflight_observed();
  return run;
}

// ─── Wall-clock scheduling ───────────────────────────────────────────────────

// Same contract on real threads: synthesis runs concurrently (bounded by
// max_inflight), the calling thread plays audio in order. Chunk offsets are
// honoured by sleeping. Times in the result are ms since the call.
inline SpeakRun speak_live(const TokenStream& stream, TtsClient& tts, const SpeakConfig& cfg, AudioSink& sink) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  auto now_ms = [&] {
    return static_cast<Millis>(std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count());
  };

  struct Completion {
    std::size_t index;
    std::optional<TtsResult> result;
  };
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Completion> done;
  std::vector<std::future<void>> workers;

  StreamingSpeaker speaker(cfg, 0);
  SpeakRun run;

  auto dispatch = [&](const std::vector<TtsRequest>& reqs) {
    for (const auto& r : reqs) {
      workers.push_back(std::async(std::launch::async, [&, r] {
        Completion c{r.request_index, std::nullopt};
        try {
          c.result = tts.synthesize(r);
        } catch (const ServiceError&) {
        }
        {
          std::lock_guard lock(mu);
          done.push_back(std::move(c));
        }
        cv.notify_all();
      }));
    }
  };

  auto drain_completions = [&] {
    std::deque<Completion> batch;
    {
      std::lock_guard lock(mu);
      batch.swap(done);
    }
    for (auto& c : batch) {
      if (c.result) {
        dispatch(speaker.on_result(std::move(*c.result)));
      } else {
        bool gave_up = false;
        dispatch(speaker.on_failure(c.index, gave_up));
      }
    }
  };

  auto play_ready = [&] {
    while (auto audio = speaker.next_playback(now_ms())) {
      const Millis start = now_ms();
      sink.play(audio->index, audio->audio, start);
      run.emissions.push_back({audio->index, start, start + audio->audio_ms(), audio->fallback});
      if (audio->fallback) ++run.fallbacks;
      speaker.on_playback_finished(now_ms());
    }
  };

  for (const auto& c : stream.chunks) {
    std::this_thread::sleep_until(t0 + std::chrono::milliseconds(c.offset_ms));
    dispatch(c.end ? speaker.on_end(now_ms()) : speaker.on_chunk(c.text, now_ms()));
    drain_completions();
    play_ready();
  }
  while (!speaker.finished()) {
    {
      std::unique_lock lock(mu);
      cv.wait_for(lock, std::chrono::milliseconds(50), [&] { return !done.empty(); });
    }
    drain_completions();
    play_ready();
  }
  for (auto& w : workers) w.get();
  run.segments = speaker.segments();
  run.trace = speaker.trace();
  run.max_inflight_observed = speaker.queue().max_inflight_observed();
  return run;
}

}  // namespace parley
