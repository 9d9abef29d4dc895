#include <gtest/gtest.h>

#include <random>

#include "parley/engine.hpp"

using namespace parley;

namespace {

struct Harness {
  EngineState state;
  std::vector<EngineAction> last;

  explicit Harness(EngineConfig cfg = {}) : state(initial_state(std::move(cfg))) {}

  const std::vector<EngineAction>& feed(Millis t, EventPayload p) {
    auto [next, actions] = step(state, EngineEvent{t, std::move(p)});
    state = std::move(next);
    last = std::move(actions);
    return last;
  }

  template <class A>
  const A* find() const {
    for (const auto& a : last) {
      if (const auto* x = std::get_if<A>(&a)) return x;
    }
    return nullptr;
  }
  template <class A>
  int count() const {
    int n = 0;
    for (const auto& a : last) n += std::holds_alternative<A>(a);
    return n;
  }
};

ev::Transcript final_tr(std::string text, Millis s, Millis e) {
  return {TranscriptEvent{TranscriptEvent::Kind::Final, std::move(text), s, e, std::nullopt}};
}
ev::Transcript interim_tr(std::string text, Millis s, Millis e) {
  return {TranscriptEvent{TranscriptEvent::Kind::Interim, std::move(text), s, e, std::nullopt}};
}
ev::GateResult gate(bool speaking, std::optional<GateEvidence> evd = std::nullopt) {
  return {GateDecision{speaking, speaking && !evd ? std::optional(GateEvidence::Vad) : evd}};
}
ev::Cleaned cleaned(const std::string& raw) { return {clean_transcript(raw)}; }
ev::Completion done(bool complete, CompletionReason r = CompletionReason::TerminalPunct) {
  return {CompletionAssessment{complete, 0.9, r}};
}

// Drives one whole turn and leaves the engine in Speaking.
void to_speaking(Harness& h, Millis t0 = 0) {
  h.feed(t0 + 100, ev::FrameVad{true});
  h.feed(t0 + 100, gate(true));
  h.feed(t0 + 900, ev::FrameVad{false});
  h.feed(t0 + 900, gate(false));
  h.feed(t0 + 950, final_tr("I like football.", t0 + 100, t0 + 800));
  h.feed(t0 + 950, cleaned("I like football."));
  h.feed(t0 + 950, done(true));
  h.feed(t0 + 1250, ev::ReplyToken{"Great.", false});
  h.feed(t0 + 1450, ev::AudioPlaybackStarted{0, "Great."});
}

}  // namespace

TEST(Engine, HappyPathProducesOneTurn) {
  Harness h;
  EXPECT_EQ(h.state.phase, Phase::Listening);
  h.feed(100, ev::FrameVad{true});
  EXPECT_EQ(h.count<act::RunGate>(), 1);
  h.feed(100, gate(true));
  EXPECT_EQ(h.state.phase, Phase::UserSpeaking);
  h.feed(900, ev::FrameVad{false});
  h.feed(900, gate(false));
  EXPECT_EQ(h.state.phase, Phase::Listening) << "no words yet, so silence ends the speaking phase";

  h.feed(950, final_tr("um I like football.", 100, 800));
  ASSERT_TRUE(h.find<act::RunCleaner>());
  EXPECT_EQ(h.find<act::RunCleaner>()->text, "um I like football.");
  EXPECT_EQ(h.state.phase, Phase::Refining);

  h.feed(950, cleaned("um I like football."));
  ASSERT_TRUE(h.find<act::RunCompletion>());
  EXPECT_EQ(h.find<act::RunCompletion>()->text, "I like football.");
  EXPECT_EQ(h.find<act::RunCompletion>()->silence_ms, 150);

  h.feed(950, done(true));
  ASSERT_TRUE(h.find<act::StartGeneration>());
  const auto& gen = *h.find<act::StartGeneration>();
  EXPECT_EQ(gen.turn, 0);
  ASSERT_EQ(gen.history.size(), 1u);
  EXPECT_EQ(gen.history[0].text, "I like football.");
  EXPECT_EQ(h.state.phase, Phase::Generating);

  h.feed(1250, ev::ReplyToken{"Great.", false});
  EXPECT_TRUE(h.find<act::SpeakSegments>());
  EXPECT_EQ(h.state.phase, Phase::Speaking);
  h.feed(1300, ev::ReplyToken{" Me too.", false});
  EXPECT_FALSE(h.find<act::SpeakSegments>()) << "released once";
  h.feed(1300, ev::ReplyToken{"", true});

  h.feed(1450, ev::AudioPlaybackStarted{0, "Great."});
  h.feed(1750, ev::AudioPlaybackFinished{0, false});
  h.feed(1750, ev::AudioPlaybackStarted{1, "Me too."});
  h.feed(2100, ev::AudioPlaybackFinished{1, true});
  ASSERT_EQ(h.state.turns.size(), 1u);
  const auto& turn = h.state.turns[0];
  EXPECT_EQ(turn.user.text, "I like football.");
  EXPECT_EQ(turn.user.t_end_ms, 800);
  EXPECT_EQ(turn.robot.text, "Great. Me too.");
  EXPECT_EQ(turn.robot.t_start_ms, 1450);
  EXPECT_EQ(turn.robot.t_end_ms, 2100);
  EXPECT_EQ(turn.response_latency_ms, 650);
  EXPECT_EQ(h.state.phase, Phase::Listening);
  EXPECT_EQ(h.state.active_turn_index, 1);
  EXPECT_EQ(h.count<act::AppendLog>(), 4) << "playback, two utterances, phase";
}

TEST(Engine, TimeMustNotGoBackwards) {
  Harness h;
  h.feed(100, ev::FrameVad{true});
  EXPECT_THROW(h.feed(99, ev::FrameVad{true}), ContractError);
}

TEST(Engine, VadOnlyRunsGateOnChange) {
  Harness h;
  h.feed(0, ev::FrameVad{false});
  EXPECT_TRUE(h.last.empty());
  h.feed(16, ev::FrameVad{true});
  EXPECT_EQ(h.count<act::RunGate>(), 1);
  h.feed(32, ev::FrameVad{true});
  EXPECT_EQ(h.count<act::RunGate>(), 0);
  EXPECT_EQ(h.state.last_speech_ms, 32);
}

TEST(Engine, TranscriptEvidenceArmsGateTimer) {
  Harness h;
  h.feed(100, interim_tr("so", 0, 100));
  h.feed(100, gate(true, GateEvidence::Transcript));
  ASSERT_TRUE(h.find<act::SetTimer>());
  EXPECT_EQ(h.find<act::SetTimer>()->at_ms, 600);
  h.feed(600, ev::TimerFired{"gate"});
  EXPECT_EQ(h.count<act::RunGate>(), 1);
  h.feed(600, ev::TimerFired{"gate"});
  EXPECT_EQ(h.count<act::RunGate>(), 0) << "timer already consumed";
}

TEST(Engine, EmptyCleanedTextDropsTurn) {
  Harness h;
  h.feed(500, final_tr("um uh", 0, 400));
  h.feed(500, cleaned("um uh"));
  EXPECT_EQ(h.state.phase, Phase::Listening);
  EXPECT_TRUE(h.state.pending_user_text.empty());
}

TEST(Engine, StaleCleanedResultIgnored) {
  Harness h;
  h.feed(500, final_tr("I went", 0, 400));
  h.feed(520, final_tr("home.", 450, 510));  // pending is now "I went home."
  h.feed(530, cleaned("I went"));
  EXPECT_FALSE(h.find<act::RunCompletion>());
  h.feed(530, cleaned("I went home."));
  EXPECT_TRUE(h.find<act::RunCompletion>());
}

TEST(Engine, IncompleteWaitsForSilenceTimer) {
  Harness h;
  h.feed(900, final_tr("I like football", 100, 800));
  h.feed(900, cleaned("I like football"));
  h.feed(900, done(false, CompletionReason::SilenceTimeout));
  EXPECT_EQ(h.state.phase, Phase::UserSpeaking);
  ASSERT_TRUE(h.find<act::SetTimer>());
  EXPECT_EQ(h.find<act::SetTimer>()->at_ms, 1500);
  h.feed(1500, ev::TimerFired{"end_silence"});
  ASSERT_TRUE(h.find<act::RunCompletion>());
  EXPECT_EQ(h.find<act::RunCompletion>()->silence_ms, 700);
  EXPECT_EQ(h.state.phase, Phase::Refining);
  h.feed(1500, done(true, CompletionReason::SilenceTimeout));
  EXPECT_TRUE(h.find<act::StartGeneration>());
}

TEST(Engine, SilenceTimerRearmsWhenSpeechResumed) {
  Harness h;
  h.feed(900, final_tr("I like football", 100, 800));
  h.feed(900, cleaned("I like football"));
  h.feed(900, done(false, CompletionReason::SilenceTimeout));
  h.feed(1200, ev::FrameVad{true});  // user makes a noise without new words
  h.feed(1200, ev::FrameVad{false});
  h.feed(1500, ev::TimerFired{"end_silence"});
  ASSERT_TRUE(h.find<act::SetTimer>());
  EXPECT_EQ(h.find<act::SetTimer>()->at_ms, 1900);
  EXPECT_FALSE(h.find<act::RunCompletion>());
}

TEST(Engine, TrailingConnectiveWaitsForMoreSpeech) {
  Harness h;
  h.feed(900, final_tr("I like football and", 100, 800));
  h.feed(900, cleaned("I like football and"));
  h.feed(900, done(false, CompletionReason::TrailingConnective));
  EXPECT_FALSE(h.find<act::SetTimer>());
  h.feed(2000, final_tr("tennis.", 1500, 1900));
  ASSERT_TRUE(h.find<act::RunCleaner>());
  EXPECT_EQ(h.find<act::RunCleaner>()->text, "I like football and tennis.");
}

TEST(Engine, ReplyWithheldWhileUserSpeaks) {
  Harness h;
  h.feed(950, final_tr("Hi.", 100, 800));
  h.feed(950, cleaned("Hi."));
  h.feed(950, done(true));
  h.feed(1000, ev::FrameVad{true});
  h.feed(1000, gate(true));
  h.feed(1250, ev::ReplyToken{"Hello.", false});
  EXPECT_FALSE(h.find<act::SpeakSegments>());
  EXPECT_TRUE(h.state.reply_withheld);
  h.feed(1400, ev::FrameVad{false});
  h.feed(1400, gate(false));
  EXPECT_TRUE(h.find<act::SpeakSegments>());
  EXPECT_EQ(h.state.phase, Phase::Speaking);
}

TEST(Engine, BargeInStopsOnce) {
  for (auto policy : {BargeInPolicy::FinishSentence, BargeInPolicy::Immediate}) {
    Harness h(EngineConfig{500, 700, policy, "Sorry."});
    to_speaking(h);
    h.feed(1500, ev::FrameVad{true});
    h.feed(1500, gate(true));
    ASSERT_TRUE(h.find<act::StopSpeaking>());
    EXPECT_EQ(h.find<act::StopSpeaking>()->immediate, policy == BargeInPolicy::Immediate);
    h.feed(1600, gate(true));
    EXPECT_FALSE(h.find<act::StopSpeaking>());
  }
}

TEST(Engine, SpeechDuringReplyIsCarriedToNextTurn) {
  Harness h;
  to_speaking(h);
  h.feed(1500, interim_tr("what", 1450, 1500));
  EXPECT_EQ(h.state.carry_interim, "what");
  h.feed(1700, final_tr("What about tennis?", 1450, 1650));
  EXPECT_FALSE(h.find<act::RunCleaner>());
  EXPECT_EQ(h.state.carry_text, "What about tennis?");
  h.feed(1900, ev::AudioPlaybackFinished{0, true});
  ASSERT_TRUE(h.find<act::RunCleaner>());
  EXPECT_EQ(h.find<act::RunCleaner>()->text, "What about tennis?");
  EXPECT_EQ(h.state.phase, Phase::Refining);
  EXPECT_EQ(h.state.user_start_ms, 1450);
  EXPECT_TRUE(h.state.carry_text.empty());
}

TEST(Engine, GenerationFailureSpeaksFallback) {
  Harness h(EngineConfig{500, 700, BargeInPolicy::FinishSentence, "Sorry, say again?"});
  h.feed(950, final_tr("Hi.", 100, 800));
  h.feed(950, cleaned("Hi."));
  h.feed(950, done(true));
  h.feed(960, ev::ServiceError{"llm", "timeout"});
  ASSERT_TRUE(h.find<act::SpeakFallback>());
  EXPECT_EQ(h.find<act::SpeakFallback>()->text, "Sorry, say again?");
  EXPECT_EQ(h.state.phase, Phase::Speaking);
}

TEST(Engine, FallbackWaitsForUserToStop) {
  Harness h;
  h.feed(950, final_tr("Hi.", 100, 800));
  h.feed(950, cleaned("Hi."));
  h.feed(950, done(true));
  h.feed(955, gate(true));
  h.feed(960, ev::ServiceError{"llm", "timeout"});
  EXPECT_FALSE(h.find<act::SpeakFallback>());
  h.feed(1200, gate(false));
  EXPECT_TRUE(h.find<act::SpeakFallback>());
}

TEST(Engine, ErrorsOutsideGenerationOnlyLog) {
  Harness h;
  h.feed(10, ev::ServiceError{"tts", "x"});
  ASSERT_EQ(h.last.size(), 1u);
  EXPECT_EQ(std::get<act::AppendLog>(h.last[0]).kind, "error");
}

TEST(Engine, LateTokensAfterTurnAreIgnored) {
  Harness h;
  to_speaking(h);
  h.feed(1900, ev::AudioPlaybackFinished{0, true});
  h.feed(1950, ev::ReplyToken{"late", false});
  EXPECT_TRUE(h.last.empty());
}

// ─── serialization ───────────────────────────────────────────────────────────

TEST(EngineJson, EventsRoundTrip) {
  const std::vector<EngineEvent> events{
      {1, ev::FrameVad{true}},
      {2, final_tr("Hi \"you\".", 0, 2)},
      {3, gate(true, GateEvidence::Transcript)},
      {3, gate(false)},
      {4, cleaned("um hi hi")},
      {5, done(false, CompletionReason::TrailingConnective)},
      {6, ev::ReplyToken{" tok", false}},
      {6, ev::ReplyToken{"", true}},
      {7, ev::AudioPlaybackStarted{2, "Hello."}},
      {8, ev::AudioPlaybackFinished{std::nullopt, true}},
      {8, ev::AudioPlaybackFinished{3, false}},
      {9, ev::TimerFired{"gate"}},
      {10, ev::ServiceError{"tts", "boom"}},
  };
  for (const auto& e : events) {
    const auto back = event_from_json(Json::parse(event_to_json(e).dump()));
    EXPECT_EQ(back, e) << event_to_json(e).dump();
  }
  EXPECT_THROW(event_from_json(Json{{"type", "warp"}, {"t_ms", 0}}), ParseError);
}

// ─── determinism ─────────────────────────────────────────────────────────────

TEST(EngineProperty, RandomSequencesReplayIdentically) {
  std::mt19937_64 rng(99);
  const std::vector<std::string> words{"um", "I", "like", "football.", "and", "so", "what?"};
  for (int run = 0; run < 200; ++run) {
    std::vector<EngineEvent> events;
    Millis t = 0;
    for (int i = 0; i < 60; ++i) {
      t += static_cast<Millis>(rng() % 200);
      switch (rng() % 9) {
        case 0: events.push_back({t, ev::FrameVad{rng() % 2 == 0}}); break;
        case 1: events.push_back({t, final_tr(words[rng() % words.size()], t - 50, t)}); break;
        case 2: events.push_back({t, interim_tr(words[rng() % words.size()], t - 50, t)}); break;
        case 3: events.push_back({t, gate(rng() % 2 == 0)}); break;
        case 4: events.push_back({t, done(rng() % 2 == 0)}); break;
        case 5: events.push_back({t, ev::ReplyToken{"Ok.", rng() % 3 == 0}}); break;
        case 6: events.push_back({t, ev::AudioPlaybackStarted{0, "Ok."}}); break;
        case 7: events.push_back({t, ev::AudioPlaybackFinished{0, rng() % 2 == 0}}); break;
        default: events.push_back({t, ev::TimerFired{rng() % 2 ? "gate" : "end_silence"}}); break;
      }
    }
    ASSERT_EQ(replay_actions(events), replay_actions(events));
    // Turns are always well formed.
    EngineState s = initial_state();
    for (const auto& e : events) s = step(std::move(s), e).first;
    for (std::size_t i = 0; i < s.turns.size(); ++i) EXPECT_EQ(s.turns[i].index, int(i));
  }
}
