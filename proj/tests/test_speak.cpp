#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "parley/speak.hpp"

using namespace parley;

namespace {

TtsResult audio_for(std::size_t idx, Millis ms) {
  return TtsResult{idx, std::vector<std::int16_t>(static_cast<std::size_t>(ms * kSamplesPerMs), 1), 0};
}

TokenStream bench_stream() {
  return TokenStream{{{"Hi there.", 300, false},
                      {" How are you today?", 600, false},
                      {" I hope all is well.", 900, false},
                      {"", 900, true}}};
}

SpeakConfig mode(SpeakMode m, std::size_t inflight = 2) {
  SpeakConfig c;
  c.mode = m;
  c.max_inflight = inflight;
  return c;
}

// Sleeps for the mock latency so completions really arrive out of order.
class SleepingTts final : public TtsClient {
 public:
  explicit SleepingTts(MockTtsScript s) : inner_(std::move(s)) {}
  TtsResult synthesize(const TtsRequest& r) override {
    auto res = inner_.synthesize(r);
    std::this_thread::sleep_for(std::chrono::milliseconds(res.synth_latency_ms));
    return res;
  }

 private:
  MockTtsClient inner_;
};

}  // namespace

// ─── PlaybackQueue ───────────────────────────────────────────────────────────

TEST(PlaybackQueue, BoundsInflightAndReleasesInOrder) {
  PlaybackQueue q(2);
  EXPECT_EQ(q.enqueue({"a", "", 0}).size(), 1u);
  EXPECT_EQ(q.enqueue({"b", "", 1}).size(), 1u);
  EXPECT_TRUE(q.enqueue({"c", "", 2}).empty());
  EXPECT_EQ(q.inflight(), 2u);

  const auto admitted = q.on_result(audio_for(1, 10));
  ASSERT_EQ(admitted.size(), 1u);
  EXPECT_EQ(admitted[0].request_index, 2u);
  EXPECT_FALSE(q.take_next().has_value()) << "index 0 not ready yet";

  q.on_result(audio_for(0, 10));
  auto first = q.take_next();
  ASSERT_TRUE(first);
  EXPECT_EQ(first->index, 0u);
  EXPECT_FALSE(q.take_next()) << "one playback at a time";
  q.on_played();
  EXPECT_EQ(q.take_next()->index, 1u);
  EXPECT_EQ(q.max_inflight_observed(), 2u);
}

TEST(PlaybackQueue, RetryOnceThenSilence) {
  PlaybackQueue q(1, 400);
  q.enqueue({"a", "", 0});
  bool gave_up = true;
  auto again = q.on_failure(0, gave_up);
  EXPECT_FALSE(gave_up);
  ASSERT_EQ(again.size(), 1u);
  EXPECT_EQ(again[0].text, "a");
  q.on_failure(0, gave_up);
  EXPECT_TRUE(gave_up);
  auto a = q.take_next();
  ASSERT_TRUE(a);
  EXPECT_TRUE(a->fallback);
  EXPECT_EQ(a->audio_ms(), 400);
}

TEST(PlaybackQueue, StopDropsPending) {
  PlaybackQueue q(1);
  q.enqueue({"a", "", 0});
  q.enqueue({"b", "", 1});
  q.stop();
  EXPECT_TRUE(q.on_result(audio_for(0, 10)).empty());
  EXPECT_FALSE(q.take_next());
  EXPECT_TRUE(q.finished());
  EXPECT_THROW(PlaybackQueue(0), ContractError);
}

TEST(PlaybackQueue, CompletionWithoutRequestIsContractError) {
  PlaybackQueue q(1);
  EXPECT_THROW(q.on_result(audio_for(0, 1)), ContractError);
}

// ─── StreamingSpeaker ────────────────────────────────────────────────────────

TEST(Speaker, StreamedDispatchesPerSentence) {
  StreamingSpeaker sp(mode(SpeakMode::Streamed), 0);
  EXPECT_EQ(sp.on_chunk("Hi there.", 300).size(), 1u);
  EXPECT_EQ(sp.trace().t_first_token, 300);
  EXPECT_EQ(sp.trace().t_first_sentence_closed, 300);
  EXPECT_TRUE(sp.on_chunk(" More", 340).empty());
  EXPECT_EQ(sp.on_end(380).size(), 1u);
  EXPECT_EQ(sp.segments().size(), 2u);
  EXPECT_FALSE(sp.segments()[1].complete);
}

TEST(Speaker, BatchWaitsForEnd) {
  StreamingSpeaker sp(mode(SpeakMode::Batch), 0);
  EXPECT_TRUE(sp.on_chunk("Hi there.", 300).empty());
  EXPECT_TRUE(sp.on_chunk(" Bye.", 340).empty());
  const auto reqs = sp.on_end(400);
  ASSERT_EQ(reqs.size(), 1u);
  EXPECT_EQ(reqs[0].text, "Hi there. Bye.");
  EXPECT_EQ(sp.trace().t_first_sentence_closed, 400);
}

TEST(Speaker, EmptyReplyFinishesWithoutAudio) {
  StreamingSpeaker sp(mode(SpeakMode::Streamed), 0);
  EXPECT_TRUE(sp.on_end(100).empty());
  EXPECT_TRUE(sp.finished());
}

// ─── simulate_speak ──────────────────────────────────────────────────────────

TEST(SimulateSpeak, BenchScriptTimeToFirstAudio) {
  MockTtsScript s;
  s.latency = FixedLatency{200};
  MockTtsClient a(s), b(s);
  const auto streamed = simulate_speak(bench_stream(), a, mode(SpeakMode::Streamed));
  const auto batch = simulate_speak(bench_stream(), b, mode(SpeakMode::Batch));
  EXPECT_EQ(streamed.trace.t_first_audio_out, 500);
  EXPECT_EQ(batch.trace.t_first_audio_out, 1100);
  EXPECT_EQ(streamed.segments.size(), 3u);
  EXPECT_EQ(batch.segments.size(), 1u);
  EXPECT_TRUE(streamed.trace.ordered());
  EXPECT_TRUE(batch.trace.ordered());
}

TEST(SimulateSpeak, TraceEndsAtLastAudio) {
  MockTtsScript s;
  s.latency = FixedLatency{200};
  s.per_char_ms = 10;
  MockTtsClient tts(s);
  const auto run = simulate_speak(bench_stream(), tts, mode(SpeakMode::Streamed), 1000);
  ASSERT_EQ(run.emissions.size(), 3u);
  EXPECT_EQ(run.trace.t_generation_start, 1000);
  EXPECT_EQ(run.trace.t_first_audio_out, 1500);
  EXPECT_EQ(run.trace.t_last_audio_out, run.emissions.back().end_ms);
}

TEST(SimulateSpeak, FailedSegmentBecomesSilenceAndOthersPlay) {
  MockTtsScript s;
  s.fail_indices = {1};
  s.failures_per_index = 5;
  MockTtsClient tts(s);
  auto cfg = mode(SpeakMode::Streamed);
  cfg.fallback_silence_ms = 250;
  const auto run = simulate_speak(bench_stream(), tts, cfg);
  ASSERT_EQ(run.emissions.size(), 3u);
  EXPECT_EQ(run.fallbacks, 1u);
  EXPECT_TRUE(run.emissions[1].fallback);
  EXPECT_EQ(run.emissions[1].end_ms - run.emissions[1].start_ms, 250);
}

TEST(SimulateSpeak, RandomLatencyKeepsOrderAndBound) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    MockTtsScript s;
    s.latency = UniformLatency{50, 2000, rng()};
    s.per_char_ms = 5;
    MockTtsClient tts(s);
    const std::size_t inflight = 1 + trial % 3;
    std::string text;
    const int sentences = 2 + static_cast<int>(rng() % 6);
    for (int i = 0; i < sentences; ++i) text += "Sentence number " + std::to_string(i) + ". ";
    const auto run = simulate_speak(make_token_stream(text, Chunking::Word, 100, 20), tts,
                                    mode(SpeakMode::Streamed, inflight));
    ASSERT_EQ(run.emissions.size(), std::size_t(sentences));
    for (std::size_t i = 0; i < run.emissions.size(); ++i) {
      EXPECT_EQ(run.emissions[i].index, i);
      if (i) {
        EXPECT_GE(run.emissions[i].start_ms, run.emissions[i - 1].end_ms);
      }
    }
    EXPECT_LE(run.max_inflight_observed, inflight);
  }
}

// ─── speak_live ──────────────────────────────────────────────────────────────

TEST(SpeakLive, PlaysInOrderOnRealThreads) {
  MockTtsScript s;
  s.latency = UniformLatency{5, 60, 9};
  s.per_char_ms = 1;
  SleepingTts tts(s);
  BufferAudioSink sink;
  const auto stream = make_token_stream("One. Two. Three. Four. Five.", Chunking::Word, 10, 5);
  const auto run = speak_live(stream, tts, mode(SpeakMode::Streamed, 3), sink);
  ASSERT_EQ(run.emissions.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(run.emissions[i].index, i);
  EXPECT_LE(run.max_inflight_observed, 3u);
  EXPECT_TRUE(run.trace.ordered());
  EXPECT_FALSE(sink.pcm().empty());
}
