#include <gtest/gtest.h>

#include <random>

#include "parley/agents.hpp"

using namespace parley;

namespace {

TranscriptEvent interim(std::string t, Millis s, Millis e) {
  return {TranscriptEvent::Kind::Interim, std::move(t), s, e, std::nullopt};
}
TranscriptEvent final_ev(std::string t, Millis s, Millis e) {
  return {TranscriptEvent::Kind::Final, std::move(t), s, e, std::nullopt};
}

// Replies with a fixed text and records what it was asked.
class CannedChat final : public ChatClient {
 public:
  explicit CannedChat(std::string reply, bool fail = false) : reply_(std::move(reply)), fail_(fail) {}
  TokenStream chat(const ChatRequest& r) override {
    last = r;
    if (fail_) throw ServiceError("llm", "down");
    return make_token_stream(reply_, Chunking::Whole, 10, 0);
  }
  ChatRequest last;

 private:
  std::string reply_;
  bool fail_;
};

const PromptSet kPrompts;

}  // namespace

// ─── gate ────────────────────────────────────────────────────────────────────

TEST(Gate, VadWins) {
  const auto d = gate_detect({true, {}, 1000});
  EXPECT_TRUE(d.user_speaking);
  EXPECT_EQ(d.evidence, GateEvidence::Vad);
}

TEST(Gate, RecentInterimCountsInsideWindow) {
  GateWindow w{false, {interim("so", 100, 600)}, 1100};
  EXPECT_EQ(gate_detect(w).evidence, GateEvidence::Transcript);
  w.now_ms = 1101;
  EXPECT_FALSE(gate_detect(w).user_speaking);
  EXPECT_FALSE(gate_detect(w).evidence.has_value());
}

TEST(Gate, FinalsDoNotKeepTheGateOpen) {
  GateWindow w{false, {final_ev("Done.", 100, 600)}, 700};
  EXPECT_FALSE(gate_detect(w).user_speaking);
}

TEST(Gate, TrackerDropsOldTranscripts) {
  GateTracker tr(1000);
  tr.on_transcript(interim("a", 0, 100));
  tr.on_transcript(interim("b", 500, 900));
  tr.on_vad(true);
  auto w = tr.window(1500);
  ASSERT_EQ(w.recent.size(), 1u);
  EXPECT_EQ(w.recent[0].text, "b");
  EXPECT_TRUE(w.vad_active);
}

// ─── cleaner ─────────────────────────────────────────────────────────────────

TEST(Cleaner, DropsFillersCollapsesRepeatsFixesCase) {
  const auto c = clean_transcript("um I like like football uh");
  EXPECT_EQ(c.cleaned, "I like football");
  ASSERT_EQ(c.edits.size(), 3u);
  EXPECT_EQ(c.edits[0].kind, EditKind::DropFiller);
  EXPECT_EQ(c.edits[0].token, 0u);
  EXPECT_EQ(c.edits[1].kind, EditKind::CollapseRepeat);
  EXPECT_EQ(c.edits[1].token, 3u);
  EXPECT_EQ(c.edits[2].kind, EditKind::DropFiller);
}

TEST(Cleaner, CapitalizesFirstKeptWord) {
  const auto c = clean_transcript("uh, what time is it?");
  EXPECT_EQ(c.cleaned, "What time is it?");
  EXPECT_EQ(c.edits.back().kind, EditKind::FixCase);
  EXPECT_EQ(c.edits.back().token, 1u);
}

TEST(Cleaner, RepeatComparisonIgnoresCaseAndPunctuation) {
  EXPECT_EQ(clean_transcript("The the, cat").cleaned, "The cat");
  EXPECT_EQ(clean_transcript("I I I I go").cleaned, "I go");
  EXPECT_EQ(clean_transcript("").cleaned, "");
  EXPECT_EQ(clean_transcript("um uh").cleaned, "");
}

TEST(Cleaner, ApplyEditsReproducesCleaned) {
  const auto c = clean_transcript("so um so I went went home");
  EXPECT_EQ(apply_edits(c.raw, c.edits), c.cleaned);
}

TEST(Cleaner, IdempotentOnRandomInput) {
  const std::vector<std::string> vocab{"um", "uh", "erm", "I", "i", "like", "Like", "the", "The", "cat,", "cat",
                                       "go.", "and", "so", "well", "..."};
  std::mt19937_64 rng(11);
  for (int n = 0; n < 2000; ++n) {
    std::string s;
    const int len = static_cast<int>(rng() % 12);
    for (int i = 0; i < len; ++i) s += (i ? " " : "") + vocab[rng() % vocab.size()];
    const auto once = clean_transcript(s).cleaned;
    const auto twice = clean_transcript(once);
    ASSERT_EQ(twice.cleaned, once) << "input: " << s;
    ASSERT_TRUE(twice.edits.empty()) << "input: " << s;
  }
}

// ─── completion ──────────────────────────────────────────────────────────────

TEST(Completion, TerminalPunctuation) {
  const auto a = assess_completion("I like football.", 0);
  EXPECT_TRUE(a.complete);
  EXPECT_EQ(a.reason, CompletionReason::TerminalPunct);
}

TEST(Completion, SilenceTimeout) {
  auto a = assess_completion("I like football", 699);
  EXPECT_FALSE(a.complete);
  a = assess_completion("I like football", 700);
  EXPECT_TRUE(a.complete);
  EXPECT_EQ(a.reason, CompletionReason::SilenceTimeout);
}

TEST(Completion, TrailingConnectiveNeverCompletes) {
  const auto a = assess_completion("I went home and", 5000);
  EXPECT_FALSE(a.complete);
  EXPECT_EQ(a.reason, CompletionReason::TrailingConnective);
  EXPECT_FALSE(assess_completion("", 5000).complete);
  EXPECT_THROW(assess_completion("x", -1), ContractError);
}

// ─── responders ──────────────────────────────────────────────────────────────

TEST(Responder, HistoryMustEndWithUser) {
  RuleResponder r;
  std::vector<Utterance> h;
  EXPECT_THROW(generate_reply(h, r), ContractError);
  h.push_back(make_utterance(Speaker::Robot, "Hi.", 0, 10));
  EXPECT_THROW(generate_reply(h, r), ContractError);
  h.push_back(make_utterance(Speaker::User, "hello robot", 20, 30));
  EXPECT_EQ(generate_reply(h, r).text(), RuleResponderConfig{}.greeting);
}

TEST(Responder, RuleTopics) {
  RuleResponder r;
  EXPECT_EQ(r.choose("tell me a joke"), RuleResponderConfig{}.joke);
  EXPECT_EQ(r.choose("my cat is grey"), RuleResponderConfig{}.fallback);
}

TEST(Responder, LlmSendsHistoryWithRoles) {
  CannedChat chat("Sure thing.");
  LlmResponder r(chat, kPrompts.responder, 0.3);
  std::vector<Utterance> h{make_utterance(Speaker::User, "hi", 0, 1), make_utterance(Speaker::Robot, "hey", 2, 3),
                           make_utterance(Speaker::User, "joke?", 4, 5)};
  EXPECT_EQ(r.reply(h).text(), "Sure thing.");
  ASSERT_EQ(chat.last.messages.size(), 3u);
  EXPECT_EQ(chat.last.messages[1].role, "assistant");
  EXPECT_DOUBLE_EQ(chat.last.temperature, 0.3);
  EXPECT_EQ(chat.last.system_prompt, kPrompts.responder.text);
}

// ─── LLM strategies ──────────────────────────────────────────────────────────

TEST(LlmGate, YesNoAndFallback) {
  GateWindow w{false, {interim("so", 0, 100)}, 300};
  CannedChat yes("YES");
  EXPECT_EQ(LlmGate(yes, kPrompts.gate).detect(w), (GateDecision{true, GateEvidence::LlmJudgment}));
  EXPECT_NE(yes.last.messages[0].text.find("so"), std::string::npos);
  CannedChat no("no.");
  EXPECT_FALSE(LlmGate(no, kPrompts.gate).detect(w).user_speaking);
  CannedChat chatty("I think the user is probably done");
  EXPECT_EQ(LlmGate(chatty, kPrompts.gate).detect(w), gate_detect(w));
  CannedChat down("", true);
  EXPECT_EQ(LlmGate(down, kPrompts.gate).detect(w), gate_detect(w));
}

TEST(LlmCompletion, YesNoAndFallback) {
  CannedChat yes("Yes");
  const auto a = LlmCompletion(yes, kPrompts.completion).assess("I like", 100, {});
  EXPECT_TRUE(a.complete);
  EXPECT_EQ(a.reason, CompletionReason::LlmJudgment);
  CannedChat garbage("maybe");
  EXPECT_EQ(LlmCompletion(garbage, kPrompts.completion).assess("Done.", 0, {}), assess_completion("Done.", 0));
}

TEST(LlmCleaner, AcceptsOnlyDeletionsOfFillersAndRepeats) {
  CannedChat good("I like football");
  const auto c = LlmCleaner(good, kPrompts.cleaner).clean("um i like like football", {});
  EXPECT_EQ(c.cleaned, "I like football");
  EXPECT_EQ(c.edits.size(), 3u);

  CannedChat drops_content("I like");
  EXPECT_EQ(LlmCleaner(drops_content, kPrompts.cleaner).clean("um I like football", {}).cleaned, "I like football");
  CannedChat adds("I really like football");
  EXPECT_EQ(LlmCleaner(adds, kPrompts.cleaner).clean("I like football", {}).cleaned, "I like football");
  CannedChat down("", true);
  EXPECT_EQ(LlmCleaner(down, kPrompts.cleaner).clean("uh hi", {}), clean_transcript("uh hi"));
}
