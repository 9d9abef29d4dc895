#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "parley/core.hpp"
#include "parley/error.hpp"

namespace parley {

inline constexpr int kLogSchemaVersion = 1;

struct LogRecord {
  std::uint64_t seq = 0;
  Millis t_ms = 0;
  std::string kind;
  Json payload = Json::object();

  bool operator==(const LogRecord&) const = default;
};

inline void to_json(Json& j, const LogRecord& r) {
  j = Json{{"seq", r.seq}, {"t_ms", r.t_ms}, {"kind", r.kind}, {"payload", r.payload}};
}

inline void from_json(const Json& j, LogRecord& r) {
  r.seq = j.at("seq").get<std::uint64_t>();
  r.t_ms = j.at("t_ms").get<Millis>();
  r.kind = j.at("kind").get<std::string>();
  r.payload = j.at("payload");
}

// ─── Writers ─────────────────────────────────────────────────────────────────

// Append-only record log. Sequence numbers must run 0, 1, 2, ... and times
// must not go backwards.
class LogSink {
 public:
  virtual ~LogSink() = default;

  void append(const LogRecord& r) {
    if (r.seq != next_seq_) {
      throw ContractError("log seq gap: expected " + std::to_string(next_seq_) + ", got " + std::to_string(r.seq));
    }
    if (last_t_ && r.t_ms < *last_t_) {
      throw ContractError("log time went backwards: " + std::to_string(r.t_ms) + " < " + std::to_string(*last_t_));
    }
    write(r);
    ++next_seq_;
    last_t_ = r.t_ms;
  }

  // Stamps the next sequence number.
  const LogRecord& record(Millis t_ms, std::string kind, Json payload) {
    last_ = LogRecord{next_seq_, t_ms, std::move(kind), std::move(payload)};
    append(last_);
    return last_;
  }

  std::uint64_t next_seq() const { return next_seq_; }

 protected:
  virtual void write(const LogRecord& r) = 0;

 private:
  std::uint64_t next_seq_ = 0;
  std::optional<Millis> last_t_;
  LogRecord last_;
};

class MemoryLog final : public LogSink {
 public:
  const std::vector<LogRecord>& records() const { return records_; }

 protected:
  void write(const LogRecord& r) override { records_.push_back(r); }

 private:
  std::vector<LogRecord> records_;
};

class JsonlLog final : public LogSink {
 public:
  explicit JsonlLog(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing", 0);
  }

  const std::filesystem::path& path() const { return path_; }

 protected:
  void write(const LogRecord& r) override {
    const std::string line = Json(r).dump() + "\n";
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.flush();
    if (!out_) throw IoError("write to " + path_.string() + " failed", offset_);
    offset_ += line.size();
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t offset_ = 0;
};

// ─── Readers ─────────────────────────────────────────────────────────────────

struct LoadedLog {
  std::vector<LogRecord> records;
  std::vector<std::string> warnings;
};

// A final line that does not parse is treated as a torn write and dropped
// with a warning. Any earlier bad line is fatal.
inline LoadedLog parse_log(std::string_view content) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < content.size()) {
    auto nl = content.find('\n', pos);
    if (nl == std::string_view::npos) nl = content.size();
    lines.push_back(content.substr(pos, nl - pos));
    pos = nl + 1;
  }
  std::size_t last_nonempty = lines.size();
  for (std::size_t i = lines.size(); i-- > 0;) {
    if (!text::trim(lines[i]).empty()) {
      last_nonempty = i;
      break;
    }
  }

  LoadedLog out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = text::trim(lines[i]);
    if (line.empty()) continue;
    const std::size_t line_no = i + 1;
    try {
      out.records.push_back(Json::parse(line).get<LogRecord>());
    } catch (const Json::exception& e) {
      if (i == last_nonempty) {
        out.warnings.push_back("line " + std::to_string(line_no) + ": truncated final record dropped");
        break;
      }
      throw ParseError("line " + std::to_string(line_no) + ": corrupt record (" + e.what() + ")", line_no);
    }
    if (out.records.size() > 1) {
      const auto& prev = out.records[out.records.size() - 2];
      if (out.records.back().seq != prev.seq + 1) {
        throw ParseError("line " + std::to_string(line_no) + ": sequence gap", line_no);
      }
    }
  }
  return out;
}

inline LoadedLog read_log(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string(), 0);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_log(ss.str());
}

// ─── Session reconstruction ──────────────────────────────────────────────────

inline Json session_header_payload(const ConversationSession& s) {
  Json meta = Json::object();
  for (const auto& [k, v] : s.metadata) {
    if (k != "error") meta[k] = v;
  }
  return Json{{"schema_version", kLogSchemaVersion},
              {"session_id", s.id},
              {"condition", s.condition},
              {"started_at", s.started_at},
              {"metadata", meta}};
}

inline ConversationSession session_from_records(const std::vector<LogRecord>& records,
                                                std::vector<std::string>* warnings = nullptr) {
  if (records.empty() || records.front().kind != "session_header") {
    throw ParseError("missing session header");
  }
  const Json& h = records.front().payload;
  const int version = h.value("schema_version", 0);
  if (version != kLogSchemaVersion) {
    throw ParseError("unsupported log schema version " + std::to_string(version));
  }
  ConversationSession s;
  s.id = h.at("session_id").get<std::string>();
  s.condition = h.value("condition", std::string());
  s.started_at = h.value("started_at", std::string());
  s.metadata = h.value("metadata", std::map<std::string, std::string>{});

  std::map<int, std::pair<std::optional<Utterance>, std::optional<Utterance>>> by_turn;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.kind == "utterance") {
      const int turn = r.payload.at("turn").get<int>();
      auto u = r.payload.at("utterance").get<Utterance>();
      auto& slot = u.speaker == Speaker::User ? by_turn[turn].first : by_turn[turn].second;
      slot = std::move(u);
    } else if (r.kind == "error" && r.payload.value("fatal", false)) {
      s.metadata["error"] = r.payload.at("stage").get<std::string>() + ": " + r.payload.at("cause").get<std::string>();
    }
  }
  for (auto& [index, pair] : by_turn) {
    if (!pair.first || !pair.second) {
      if (warnings) warnings->push_back("turn " + std::to_string(index) + " is incomplete and was dropped");
      continue;
    }
    Turn t;
    t.index = index;
    t.user = std::move(*pair.first);
    t.robot = std::move(*pair.second);
    t.response_latency_ms = response_latency(t.user.t_end_ms, t.robot.t_start_ms).ms;
    s.turns.push_back(std::move(t));
  }
  return s;
}

inline ConversationSession load_session(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr) {
  auto log = read_log(path);
  if (warnings) warnings->insert(warnings->end(), log.warnings.begin(), log.warnings.end());
  return session_from_records(log.records, warnings);
}

// Minimal log for a session that did not come from the engine: header plus
// one utterance record per side of each turn.
inline void write_session_log(const ConversationSession& s, LogSink& log) {
  log.record(0, "session_header", session_header_payload(s));
  Millis t = 0;
  for (const auto& turn : s.turns) {
    t = std::max(t, turn.robot.t_end_ms);
    log.record(t, "utterance", {{"turn", turn.index}, {"utterance", turn.user}});
    log.record(t, "utterance", {{"turn", turn.index}, {"utterance", turn.robot}});
  }
  if (auto it = s.metadata.find("error"); it != s.metadata.end()) {
    const auto colon = it->second.find(": ");
    const std::string stage = colon == std::string::npos ? "session" : it->second.substr(0, colon);
    const std::string cause = colon == std::string::npos ? it->second : it->second.substr(colon + 2);
    log.record(t, "error", {{"stage", stage}, {"cause", cause}, {"fatal", true}});
  }
}

// ─── CSV ─────────────────────────────────────────────────────────────────────

namespace csv {

struct Row {
  std::size_t line = 0;  // physical line where the record starts, 1-based
  std::vector<std::string> fields;
};

inline std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string format_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += quote(fields[i]);
  }
  out += "\r\n";
  return out;
}

// RFC 4180 reader; accepts LF or CRLF record separators and a UTF-8 BOM.
inline std::vector<Row> parse(std::string_view in) {
  if (in.substr(0, 3) == "\xEF\xBB\xBF") in.remove_prefix(3);
  std::vector<Row> rows;
  Row row;
  std::string field;
  std::size_t line = 1;
  row.line = 1;
  bool in_quotes = false;
  bool field_started = false;
  auto end_field = [&] {
    row.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    const bool blank = row.fields.size() == 1 && row.fields[0].empty();
    if (!blank) rows.push_back(std::move(row));
    row = Row{};
    row.line = line;
  };
  for (std::size_t i = 0; i < in.size(); ++i) {
    const char c = in[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < in.size() && in[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"') {
      if (field_started || !field.empty()) throw ParseError("line " + std::to_string(line) + ": stray quote", line);
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' && i + 1 < in.size() && in[i + 1] == '\n') {
      // handled with the following LF
    } else if (c == '\n') {
      ++line;
      end_row();
    } else {
      if (field_started) throw ParseError("line " + std::to_string(line) + ": text after closing quote", line);
      field += c;
    }
  }
  if (in_quotes) throw ParseError("line " + std::to_string(row.line) + ": unterminated quoted field", row.line);
  if (!field.empty() || field_started || !row.fields.empty()) end_row();
  return rows;
}

}  // namespace csv

// ─── Rating template ─────────────────────────────────────────────────────────

inline const std::vector<std::string>& rating_columns() {
  static const std::vector<std::string> cols{
      "session_id", "turn_index",      "user_text", "robot_text",  "response_latency_ms",
      "relevance",  "specificity",     "clarity",   "coherence",   "appropriateness",
      "timing",     "topic_shift",     "coder_id"};
  return cols;
}

inline std::string export_rating_template(const ConversationSession& s) {
  if (s.turns.empty()) throw ContractError("empty template: session " + s.id + " has no turns");
  std::string out = csv::format_row(rating_columns());
  for (const auto& t : s.turns) {
    out += csv::format_row({s.id, std::to_string(t.index), t.user.text, t.robot.text,
                            std::to_string(t.response_latency_ms), "", "", "", "", "", "", "", ""});
  }
  return out;
}

}  // namespace parley
