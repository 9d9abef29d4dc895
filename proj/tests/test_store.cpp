#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "parley/store.hpp"

using namespace parley;
namespace fs = std::filesystem;

namespace {

ConversationSession sample_session(int turns = 2) {
  ConversationSession s;
  s.id = "s1";
  s.condition = "streamed";
  s.started_at = "2025-01-01T00:00:00Z";
  s.metadata = {{"participant", "p1"}};
  Millis t = 0;
  for (int i = 0; i < turns; ++i) {
    Turn turn;
    turn.index = i;
    turn.user = make_utterance(Speaker::User, "Hello, \"robot\" " + std::to_string(i) + ".", t, t + 800);
    turn.robot = make_utterance(Speaker::Robot, "Hi,\nthere.", t + 1400, t + 2500);
    turn.response_latency_ms = 600;
    s.turns.push_back(turn);
    t += 4000;
  }
  return s;
}

std::string log_text(const ConversationSession& s) {
  MemoryLog log;
  write_session_log(s, log);
  std::string out;
  for (const auto& r : log.records()) out += Json(r).dump() + "\n";
  return out;
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("parley_store_" + name); }

}  // namespace

TEST(Log, SinkEnforcesSequenceAndTime) {
  MemoryLog log;
  log.record(5, "a", {});
  EXPECT_THROW(log.append(LogRecord{3, 6, "b", {}}), ContractError);
  EXPECT_THROW(log.record(4, "b", {}), ContractError);
  log.record(5, "b", {});
  EXPECT_EQ(log.next_seq(), 2u);
  EXPECT_EQ(log.records()[1].seq, 1u);
}

TEST(Log, SessionRoundTripThroughFile) {
  const auto s = sample_session();
  const auto path = temp_file("rt.jsonl");
  {
    JsonlLog log(path);
    write_session_log(s, log);
  }
  std::vector<std::string> warnings;
  EXPECT_EQ(load_session(path, &warnings), s);
  EXPECT_TRUE(warnings.empty());
  fs::remove(path);
}

TEST(Log, ErrorMetadataSurvives) {
  auto s = sample_session(1);
  s.metadata["error"] = "asr: connection lost";
  MemoryLog log;
  write_session_log(s, log);
  EXPECT_EQ(session_from_records(log.records()), s);
}

TEST(Log, TornFinalLineIsDroppedWithWarning) {
  auto text = log_text(sample_session());
  text += R"({"seq": 5, "t_ms": 9000, "kind": "utter)";
  const auto loaded = parse_log(text);
  ASSERT_EQ(loaded.warnings.size(), 1u);
  EXPECT_NE(loaded.warnings[0].find("truncated"), std::string::npos);
  EXPECT_EQ(session_from_records(loaded.records), sample_session());
}

TEST(Log, CorruptMiddleLineIsFatal) {
  auto text = log_text(sample_session());
  const auto second_nl = text.find('\n', text.find('\n') + 1);
  text.insert(second_nl + 1, "not json\n");
  try {
    parse_log(text);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Log, SequenceGapIsFatal) {
  std::string text = Json(LogRecord{0, 0, "session_header", {}}).dump() + "\n" +
                     Json(LogRecord{2, 0, "x", {}}).dump() + "\n" + Json(LogRecord{3, 0, "x", {}}).dump() + "\n";
  EXPECT_THROW(parse_log(text), ParseError);
}

TEST(Log, MissingHeaderOrWrongVersion) {
  EXPECT_THROW(session_from_records({}), ParseError);
  EXPECT_THROW(session_from_records({LogRecord{0, 0, "utterance", {}}}), ParseError);
  EXPECT_THROW(session_from_records({LogRecord{0, 0, "session_header", {{"schema_version", 99}, {"session_id", "x"}}}}),
               ParseError);
  EXPECT_THROW(load_session(temp_file("does-not-exist")), IoError);
}

TEST(Log, IncompleteTurnDroppedWithWarning) {
  MemoryLog log;
  const auto s = sample_session(2);
  log.record(0, "session_header", session_header_payload(s));
  log.record(1, "utterance", {{"turn", 0}, {"utterance", s.turns[0].user}});
  log.record(2, "utterance", {{"turn", 0}, {"utterance", s.turns[0].robot}});
  log.record(3, "utterance", {{"turn", 1}, {"utterance", s.turns[1].user}});
  std::vector<std::string> warnings;
  const auto back = session_from_records(log.records(), &warnings);
  EXPECT_EQ(back.turns.size(), 1u);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("turn 1"), std::string::npos);
}

// ─── CSV ─────────────────────────────────────────────────────────────────────

TEST(Csv, QuotesOnlyWhenNeeded) {
  EXPECT_EQ(csv::quote("plain"), "plain");
  EXPECT_EQ(csv::quote("a,b"), "\"a,b\"");
  EXPECT_EQ(csv::quote("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(csv::format_row({"a", "b c", ""}), "a,b c,\r\n");
}

TEST(Csv, ParsesQuotedNewlinesBomAndLf) {
  const auto rows = csv::parse("\xEF\xBB\xBFh1,h2\n\"multi\nline\",\"q\"\"x\"\r\nlast,\n");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].fields[0], "h1");
  EXPECT_EQ(rows[1].fields[0], "multi\nline");
  EXPECT_EQ(rows[1].fields[1], "q\"x");
  EXPECT_EQ(rows[2].line, 4u);
  EXPECT_EQ(rows[2].fields, (std::vector<std::string>{"last", ""}));
}

TEST(Csv, RejectsBrokenQuoting) {
  EXPECT_THROW(csv::parse("a,\"open\n"), ParseError);
  EXPECT_THROW(csv::parse("a,b\"c\n"), ParseError);
  EXPECT_THROW(csv::parse("\"x\"y\n"), ParseError);
}

TEST(Csv, FormatParseRoundTripRandom) {
  const std::string alphabet = "ab,\" \n\r\xC3\xA9";
  std::mt19937_64 rng(3);
  for (int n = 0; n < 500; ++n) {
    std::vector<std::string> fields(1 + rng() % 5);
    for (auto& f : fields) {
      const auto len = rng() % 8;
      for (std::size_t i = 0; i < len; ++i) f += alphabet[rng() % alphabet.size()];
    }
    if (fields.size() == 1 && fields[0].empty()) continue;  // a blank line is not a record
    const auto rows = csv::parse(csv::format_row(fields));
    ASSERT_EQ(rows.size(), 1u);
    ASSERT_EQ(rows[0].fields, fields);
  }
}

// ─── rating template ─────────────────────────────────────────────────────────

TEST(Template, OneLinePerTurnPlusHeader) {
  const auto s = sample_session(4);
  const auto csv_text = export_rating_template(s);
  const auto rows = csv::parse(csv_text);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0].fields, rating_columns());
  EXPECT_EQ(rows[1].fields[2], s.turns[0].user.text);
  EXPECT_EQ(rows[1].fields[3], "Hi,\nthere.");
  EXPECT_EQ(rows[4].fields[1], "3");
  EXPECT_EQ(rows[4].fields[4], "600");
  EXPECT_THROW(export_rating_template(sample_session(0)), ContractError);
}
