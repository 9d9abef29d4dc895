#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/rational.hpp>

#include "parley/core.hpp"
#include "parley/error.hpp"
#include "parley/stats.hpp"
#include "parley/store.hpp"

namespace parley::eval {

using Rational = boost::rational<std::int64_t>;

inline std::string to_string(const Rational& r) {
  if (r.denominator() == 1) return std::to_string(r.numerator());
  return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

inline double to_double(const Rational& r) { return boost::rational_cast<double>(r); }

// ─── Rubric ──────────────────────────────────────────────────────────────────

enum class Dimension { Relevance, Specificity, Clarity, Coherence, Appropriateness, Timing };

inline constexpr std::array<Dimension, 6> kDimensions = {Dimension::Relevance,  Dimension::Specificity,
                                                         Dimension::Clarity,    Dimension::Coherence,
                                                         Dimension::Appropriateness, Dimension::Timing};

inline std::string_view to_string(Dimension d) {
  switch (d) {
    case Dimension::Relevance: return "relevance";
    case Dimension::Specificity: return "specificity";
    case Dimension::Clarity: return "clarity";
    case Dimension::Coherence: return "coherence";
    case Dimension::Appropriateness: return "appropriateness";
    case Dimension::Timing: return "timing";
  }
  return "?";
}

// Anchors for the 1..3 scale, shown to coders.
inline std::string_view rubric_anchor(Dimension d) {
  switch (d) {
    case Dimension::Relevance: return "1 off-topic, 2 partially relevant, 3 directly addresses the user";
    case Dimension::Specificity: return "1 generic, 2 somewhat specific, 3 specific to what the user said";
    case Dimension::Clarity: return "1 confusing, 2 understandable with effort, 3 clear";
    case Dimension::Coherence: return "1 breaks the flow, 2 loosely connected, 3 follows naturally";
    case Dimension::Appropriateness: return "1 inappropriate, 2 acceptable, 3 fitting for the context";
    case Dimension::Timing: return "1 long pause, 2 robot interrupts user, 3 no issues";
  }
  return "";
}

enum class TopicShift { None = 0, Unrelated = 1, CutOff = 2, UnlinkedReturn = 3, PrematureClose = 4 };

inline std::string_view to_string(TopicShift t) {
  switch (t) {
    case TopicShift::None: return "none";
    case TopicShift::Unrelated: return "1";
    case TopicShift::CutOff: return "2";
    case TopicShift::UnlinkedReturn: return "3";
    case TopicShift::PrematureClose: return "4";
  }
  return "?";
}

inline std::optional<TopicShift> parse_topic_shift(std::string_view s) {
  const auto t = text::to_lower(text::trim(s));
  if (t.empty() || t == "none" || t == "0" || t == "-") return TopicShift::None;
  if (t == "1" || t == "unrelated") return TopicShift::Unrelated;
  if (t == "2" || t == "cut_off" || t == "cutoff") return TopicShift::CutOff;
  if (t == "3" || t == "unlinked_return") return TopicShift::UnlinkedReturn;
  if (t == "4" || t == "premature_close") return TopicShift::PrematureClose;
  return std::nullopt;
}

struct TurnRating {
  std::string session_id;
  int turn_index = 0;
  std::string coder_id;
  std::array<int, 6> scores{3, 3, 3, 3, 3, 3};  // kDimensions order
  TopicShift topic_shift = TopicShift::None;

  int score(Dimension d) const { return scores[static_cast<std::size_t>(d)]; }
  bool operator==(const TurnRating&) const = default;
};

inline void check_rating(const TurnRating& r) {
  for (auto d : kDimensions) {
    const int v = r.score(d);
    if (v < 1 || v > 3) {
      throw ContractError(std::string(to_string(d)) + " score " + std::to_string(v) + " outside 1-3 (session " +
                          r.session_id + ", turn " + std::to_string(r.turn_index) + ")");
    }
  }
}

// ─── Means and quality ───────────────────────────────────────────────────────

inline Rational dimension_mean(std::span<const TurnRating> ratings, Dimension d) {
  if (ratings.empty()) throw ContractError("dimension_mean: no ratings");
  std::int64_t sum = 0;
  for (const auto& r : ratings) {
    check_rating(r);
    sum += r.score(d);
  }
  return Rational(sum, static_cast<std::int64_t>(ratings.size()));
}

struct DimensionMeans {
  std::array<std::optional<Rational>, 6> means;
  int n = 0;

  const std::optional<Rational>& operator[](Dimension d) const { return means[static_cast<std::size_t>(d)]; }
  std::optional<Rational>& operator[](Dimension d) { return means[static_cast<std::size_t>(d)]; }
};

inline DimensionMeans dimension_means(std::span<const TurnRating> ratings) {
  DimensionMeans m;
  m.n = static_cast<int>(ratings.size());
  for (auto d : kDimensions) m[d] = dimension_mean(ratings, d);
  return m;
}

inline Rational conversation_quality(const DimensionMeans& means) {
  Rational total = 0;
  for (auto d : kDimensions) {
    if (!means[d]) throw ContractError("conversation_quality: missing " + std::string(to_string(d)) + " mean");
    total += *means[d];
  }
  return total / 6;
}

// ─── Turn balance ────────────────────────────────────────────────────────────

struct TurnBalance {
  std::int64_t w_r = 0;
  std::int64_t w_u = 0;
  std::optional<Rational> r;  // absent when the user said nothing

  bool defined() const { return r.has_value(); }
};

inline TurnBalance turn_balance(const ConversationSession& s) {
  TurnBalance b;
  for (const auto& t : s.turns) {
    b.w_u += text::word_count(t.user.text);
    b.w_r += text::word_count(t.robot.text);
  }
  if (b.w_u > 0) b.r = Rational(b.w_r, b.w_u);
  return b;
}

// ─── Topic shifts ────────────────────────────────────────────────────────────

struct TopicShiftCount {
  int total = 0;
  std::map<int, int> by_code;
};

inline TopicShiftCount count_topic_shifts(std::span<const TurnRating> ratings) {
  std::set<std::tuple<std::string, int, std::string>> seen;
  TopicShiftCount c;
  for (const auto& r : ratings) {
    if (!seen.insert({r.session_id, r.turn_index, r.coder_id}).second) {
      throw ContractError("count_topic_shifts: duplicate row for session " + r.session_id + ", turn " +
                          std::to_string(r.turn_index) + ", coder " + r.coder_id);
    }
    if (r.topic_shift != TopicShift::None) {
      ++c.total;
      ++c.by_code[static_cast<int>(r.topic_shift)];
    }
  }
  return c;
}

// ─── Ratings CSV ─────────────────────────────────────────────────────────────

// Row numbers count physical CSV records, the header being row 1, so they
// match what a spreadsheet shows.
inline std::vector<TurnRating> parse_ratings_csv(std::string_view content) {
  const auto rows = csv::parse(content);
  if (rows.empty()) throw ParseError("ratings CSV is empty");
  const auto& cols = rating_columns();
  if (rows.front().fields != cols) throw ParseError("row 1: header does not match the rating template columns", 1);

  std::vector<TurnRating> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i].fields;
    const std::size_t row_no = i + 1;
    const std::string where = "row " + std::to_string(row_no);
    if (f.size() != cols.size()) {
      throw ParseError(where + ": expected " + std::to_string(cols.size()) + " fields, found " +
                       std::to_string(f.size()), row_no);
    }
    TurnRating r;
    r.session_id = f[0];
    try {
      std::size_t used = 0;
      r.turn_index = std::stoi(f[1], &used);
      if (used != f[1].size() || r.turn_index < 0) throw std::invalid_argument("turn");
    } catch (const std::exception&) {
      throw ParseError(where + ": bad turn_index '" + f[1] + "'", row_no);
    }
    for (std::size_t d = 0; d < 6; ++d) {
      const auto cell = text::trim(f[5 + d]);
      if (cell.size() != 1 || cell[0] < '1' || cell[0] > '3') {
        throw ParseError(where + ": " + cols[5 + d] + " value '" + std::string(cell) + "' is not 1, 2 or 3", row_no);
      }
      r.scores[d] = cell[0] - '0';
    }
    const auto shift = parse_topic_shift(f[11]);
    if (!shift) throw ParseError(where + ": bad topic_shift '" + f[11] + "'", row_no);
    r.topic_shift = *shift;
    r.coder_id = std::string(text::trim(f[12]));
    if (r.coder_id.empty()) throw ParseError(where + ": coder_id is empty", row_no);
    out.push_back(std::move(r));
  }
  return out;
}

// Filled-in template rows. `session` supplies the text and latency columns
// when it matches the rating's session id.
inline std::string ratings_to_csv(std::span<const TurnRating> ratings, const ConversationSession* session = nullptr) {
  std::string out = csv::format_row(rating_columns());
  for (const auto& r : ratings) {
    std::string user, robot, latency;
    if (session && session->id == r.session_id) {
      for (const auto& t : session->turns) {
        if (t.index != r.turn_index) continue;
        user = t.user.text;
        robot = t.robot.text;
        latency = std::to_string(t.response_latency_ms);
      }
    }
    std::vector<std::string> row{r.session_id, std::to_string(r.turn_index), user, robot, latency};
    for (int s : r.scores) row.push_back(std::to_string(s));
    row.emplace_back(to_string(r.topic_shift));
    row.push_back(r.coder_id);
    out += csv::format_row(row);
  }
  return out;
}

// ─── Annotation flow ─────────────────────────────────────────────────────────

class PartialRatingsError : public std::runtime_error {
 public:
  PartialRatingsError(std::vector<TurnRating> done, std::vector<int> missing)
      : std::runtime_error(message(missing)), done_(std::move(done)), missing_(std::move(missing)) {}

  const std::vector<TurnRating>& completed() const { return done_; }
  // 0-based turn indices; the message numbers turns from 1.
  const std::vector<int>& missing_turns() const { return missing_; }

 private:
  static std::string message(const std::vector<int>& missing) {
    std::string s = "input ended early; missing ratings for turns ";
    for (std::size_t i = 0; i < missing.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(missing[i] + 1);
    }
    return s;
  }
  std::vector<TurnRating> done_;
  std::vector<int> missing_;
};

namespace detail {

inline std::optional<int> parse_score(std::string_view s) {
  const auto t = text::trim(s);
  if (t.size() == 1 && t[0] >= '1' && t[0] <= '3') return t[0] - '0';
  return std::nullopt;
}

// "3,3,2,3,3,3,none" answers a whole turn at once.
inline std::optional<TurnRating> parse_full_line(std::string_view line) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  if (parts.size() != 7) return std::nullopt;
  TurnRating r;
  for (std::size_t d = 0; d < 6; ++d) {
    auto v = parse_score(parts[d]);
    if (!v) return std::nullopt;
    r.scores[d] = *v;
  }
  auto shift = parse_topic_shift(parts[6]);
  if (!shift) return std::nullopt;
  r.topic_shift = *shift;
  return r;
}

}  // namespace detail

// Line-oriented rating prompts. Each turn accepts either one full line of
// seven comma-separated answers or one answer per prompt (six dimensions in
// rubric order, then the topic-shift code). Invalid answers are rejected and
// asked again.
inline std::vector<TurnRating> annotate(const ConversationSession& session, const std::string& coder_id,
                                        std::istream& in, std::ostream& out) {
  if (session.turns.empty()) throw ContractError("annotate: session " + session.id + " has no turns");
  std::vector<TurnRating> done;
  auto fail = [&](std::size_t from) {
    std::vector<int> missing;
    for (std::size_t i = from; i < session.turns.size(); ++i) missing.push_back(session.turns[i].index);
    throw PartialRatingsError(done, missing);
  };

  for (std::size_t ti = 0; ti < session.turns.size(); ++ti) {
    const auto& turn = session.turns[ti];
    out << "--- turn " << (ti + 1) << " of " << session.turns.size() << " (latency " << turn.response_latency_ms
        << " ms)\n";
    out << "USER:  " << turn.user.text << "\n";
    out << "ROBOT: " << turn.robot.text << "\n";

    TurnRating r;
    r.session_id = session.id;
    r.turn_index = turn.index;
    r.coder_id = coder_id;
    std::size_t field = 0;  // 0..5 dimensions, 6 topic shift
    std::string line;
    while (field < 7) {
      if (field < 6) {
        const auto d = kDimensions[field];
        out << to_string(d) << " [1-3] (" << rubric_anchor(d) << ")> ";
      } else {
        out << "topic shift [none, 1 unrelated, 2 cut-off, 3 unlinked return, 4 premature close]> ";
      }
      out.flush();
      if (!std::getline(in, line)) fail(ti);
      if (!line.empty() && line.back() == '\r') line.pop_back();

      if (field == 0 && line.find(',') != std::string::npos) {
        if (auto full = detail::parse_full_line(line)) {
          r.scores = full->scores;
          r.topic_shift = full->topic_shift;
          field = 7;
        } else {
          out << "invalid line; expected six scores 1-3 and a topic-shift code\n";
        }
        continue;
      }
      if (field < 6) {
        if (auto v = detail::parse_score(line)) {
          r.scores[field++] = *v;
        } else {
          out << "invalid answer '" << line << "'; enter 1, 2 or 3\n";
        }
      } else if (auto s = parse_topic_shift(line)) {
        r.topic_shift = *s;
        ++field;
      } else {
        out << "invalid answer '" << line << "'; enter none or 1-4\n";
      }
    }
    done.push_back(r);
  }
  return done;
}

// ─── Per-session scoring ─────────────────────────────────────────────────────

inline std::vector<TurnRating> ratings_for(std::span<const TurnRating> all, const std::string& session_id) {
  std::vector<TurnRating> out;
  for (const auto& r : all) {
    if (r.session_id == session_id) out.push_back(r);
  }
  return out;
}

inline Json score_session(const ConversationSession& s, std::span<const TurnRating> all_ratings) {
  Json j{{"session_id", s.id}, {"condition", s.condition}, {"turns", s.turns.size()}};
  const auto ratings = ratings_for(all_ratings, s.id);
  if (ratings.empty()) {
    j["quality"] = nullptr;
  } else {
    const auto means = dimension_means(ratings);
    Json dims = Json::object();
    for (auto d : kDimensions) dims[std::string(to_string(d))] = {{"fraction", to_string(*means[d])},
                                                                   {"value", to_double(*means[d])}};
    const auto cq = conversation_quality(means);
    j["dimension_means"] = dims;
    j["quality"] = {{"fraction", to_string(cq)}, {"value", to_double(cq)}, {"n_ratings", means.n}};

    std::map<std::string, std::vector<TurnRating>> by_coder;
    for (const auto& r : ratings) by_coder[r.coder_id].push_back(r);
    Json shifts = Json::object();
    for (const auto& [coder, rs] : by_coder) {
      const auto c = count_topic_shifts(rs);
      Json codes = Json::object();
      for (const auto& [code, n] : c.by_code) codes[std::to_string(code)] = n;
      shifts[coder] = {{"total", c.total}, {"by_code", codes}};
    }
    j["topic_shifts"] = shifts;
  }
  const auto b = turn_balance(s);
  j["turn_balance"] = {{"w_r", b.w_r},
                       {"w_u", b.w_u},
                       {"r", b.r ? Json(to_double(*b.r)) : Json(nullptr)},
                       {"fraction", b.r ? Json(to_string(*b.r)) : Json(nullptr)}};
  return j;
}

// ─── Paired report ───────────────────────────────────────────────────────────

enum class LatencyAggregation { PerConversation, Pooled };

struct ReportConfig {
  // Order fixes the sign of t and d: first minus second. Empty means the two
  // condition names found, sorted.
  std::vector<std::string> conditions;
  std::string pairing_key = "participant";
  LatencyAggregation latency = LatencyAggregation::PerConversation;
  double alpha = 0.05;
};

class UnpairedError : public std::runtime_error {
 public:
  explicit UnpairedError(std::vector<std::string> ids)
      : std::runtime_error(message(ids)), ids_(std::move(ids)) {}
  const std::vector<std::string>& session_ids() const { return ids_; }

 private:
  static std::string message(const std::vector<std::string>& ids) {
    std::string s = "unpaired sessions: ";
    for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? ", " : "") + ids[i];
    return s;
  }
  std::vector<std::string> ids_;
};

inline constexpr std::array<const char*, 4> kAttributes = {"response_time_s", "quality", "turn_balance",
                                                           "topic_shifts"};

struct SessionAttributes {
  std::string id;
  std::string condition;
  std::string participant;
  std::optional<double> response_time_s;
  std::vector<double> turn_latencies_s;
  std::optional<double> quality;
  std::optional<std::string> quality_fraction;
  std::optional<double> turn_balance;
  std::optional<double> topic_shifts;  // mean over coders
};

inline SessionAttributes session_attributes(const ConversationSession& s, std::span<const TurnRating> all,
                                            const ReportConfig& cfg) {
  SessionAttributes a;
  a.id = s.id;
  a.condition = s.condition;
  if (auto it = s.metadata.find(cfg.pairing_key); it != s.metadata.end()) a.participant = it->second;
  for (const auto& t : s.turns) a.turn_latencies_s.push_back(double(t.response_latency_ms) / 1000.0);
  if (!a.turn_latencies_s.empty()) a.response_time_s = stats::mean(a.turn_latencies_s);
  const auto ratings = ratings_for(all, s.id);
  if (!ratings.empty()) {
    const auto cq = conversation_quality(dimension_means(ratings));
    a.quality = to_double(cq);
    a.quality_fraction = to_string(cq);
    std::map<std::string, std::vector<TurnRating>> by_coder;
    for (const auto& r : ratings) by_coder[r.coder_id].push_back(r);
    double sum = 0;
    for (const auto& [coder, rs] : by_coder) sum += count_topic_shifts(rs).total;
    a.topic_shifts = sum / double(by_coder.size());
  }
  if (auto b = turn_balance(s); b.r) a.turn_balance = to_double(*b.r);
  return a;
}

// ICC(2,1) over (session, turn, dimension) cells rated by every coder.
inline Json icc_section(std::span<const TurnRating> ratings) {
  std::set<std::string> coders;
  for (const auto& r : ratings) coders.insert(r.coder_id);
  if (coders.size() < 2) return {{"computed", false}, {"reason", "not computed: fewer than 2 coders"}};

  std::map<std::tuple<std::string, int, int>, std::map<std::string, double>> cells;
  for (const auto& r : ratings) {
    for (std::size_t d = 0; d < 6; ++d) cells[{r.session_id, r.turn_index, int(d)}][r.coder_id] = r.scores[d];
  }
  stats::RatingMatrix m;
  m.raters.assign(coders.begin(), coders.end());
  for (const auto& [key, by_coder] : cells) {
    if (by_coder.size() != coders.size()) continue;
    m.subjects.push_back(std::get<0>(key) + "#" + std::to_string(std::get<1>(key)) + "#" +
                         std::string(to_string(kDimensions[std::get<2>(key)])));
    std::vector<std::optional<double>> row;
    for (const auto& c : m.raters) row.emplace_back(by_coder.at(c));
    m.values.push_back(std::move(row));
  }
  if (m.values.size() < 2) return {{"computed", false}, {"reason", "not computed: fewer than 2 overlapping cells"}};
  const auto v = stats::icc_2_1(m);
  Json j{{"computed", v.has_value()}, {"n_subjects", m.values.size()}, {"k_raters", m.raters.size()}};
  if (v) j["value"] = *v;
  else j["reason"] = "not computed: zero variance";
  return j;
}

struct Report {
  Json json;
  std::string text;
};

inline Report report(std::span<const ConversationSession> sessions, std::span<const TurnRating> ratings,
                     const ReportConfig& cfg) {
  std::vector<std::string> conds = cfg.conditions;
  if (conds.empty()) {
    std::set<std::string> found;
    for (const auto& s : sessions) found.insert(s.condition);
    conds.assign(found.begin(), found.end());
  }
  if (conds.size() != 2) throw ContractError("report: need exactly two conditions, found " + std::to_string(conds.size()));

  std::vector<SessionAttributes> attrs;
  for (const auto& s : sessions) {
    if (s.condition != conds[0] && s.condition != conds[1]) continue;
    attrs.push_back(session_attributes(s, ratings, cfg));
  }

  // participant -> [index in attrs for cond 0, cond 1]
  std::map<std::string, std::array<std::vector<std::size_t>, 2>> by_participant;
  for (std::size_t i = 0; i < attrs.size(); ++i) {
    by_participant[attrs[i].participant][attrs[i].condition == conds[0] ? 0 : 1].push_back(i);
  }
  std::vector<std::string> unmatched;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& [p, idx] : by_participant) {
    if (p.empty() || idx[0].size() != 1 || idx[1].size() != 1) {
      for (const auto& side : idx) {
        for (auto i : side) unmatched.push_back(attrs[i].id);
      }
      continue;
    }
    pairs.emplace_back(idx[0][0], idx[1][0]);
  }
  if (!unmatched.empty()) {
    std::sort(unmatched.begin(), unmatched.end());
    throw UnpairedError(unmatched);
  }

  const double alpha_corrected = stats::bonferroni(cfg.alpha, static_cast<int>(kAttributes.size()));
  auto get = [](const SessionAttributes& a, std::string_view attr) -> std::optional<double> {
    if (attr == "response_time_s") return a.response_time_s;
    if (attr == "quality") return a.quality;
    if (attr == "turn_balance") return a.turn_balance;
    return a.topic_shifts;
  };

  Json attributes = Json::object();
  Json skipped = Json::array();
  std::ostringstream txt;
  txt << "condition order: " << conds[0] << " - " << conds[1] << "\n";
  txt << "alpha " << cfg.alpha << " / " << kAttributes.size() << " = " << alpha_corrected << "\n\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %9s %8s %9s %8s %8s %4s %9s %8s %4s\n", "attribute", "mean_a", "sd_a",
                "mean_b", "sd_b", "t", "df", "p", "d", "sig");
  txt << buf;

  for (const char* attr : kAttributes) {
    std::vector<double> va, vb;
    for (const auto& [ia, ib] : pairs) {
      const auto a = get(attrs[ia], attr);
      const auto b = get(attrs[ib], attr);
      if (!a || !b) {
        skipped.push_back({{"attribute", attr}, {"participant", attrs[ia].participant}});
        continue;
      }
      va.push_back(*a);
      vb.push_back(*b);
    }
    if (va.size() < 2) {
      throw ContractError(std::string("report: fewer than 2 paired observations for ") + attr);
    }
    std::array<std::vector<double>, 2> summary{va, vb};
    if (std::string_view(attr) == "response_time_s" && cfg.latency == LatencyAggregation::Pooled) {
      for (int c = 0; c < 2; ++c) {
        summary[c].clear();
        for (const auto& [ia, ib] : pairs) {
          const auto& src = attrs[c == 0 ? ia : ib].turn_latencies_s;
          summary[c].insert(summary[c].end(), src.begin(), src.end());
        }
      }
    }
    const double ma = stats::mean(summary[0]), sa = stats::sd(summary[0]);
    const double mb = stats::mean(summary[1]), sb = stats::sd(summary[1]);
    auto r = stats::paired_t_test(va, vb, alpha_corrected);
    r.d = stats::cohens_d_pooled(ma, sa, mb, sb);

    Json ja{{"mean_by_condition", {{conds[0], ma}, {conds[1], mb}}},
            {"sd_by_condition", {{conds[0], sa}, {conds[1], sb}}},
            {"n_pairs", va.size()},
            {"t", std::isinf(r.t) ? Json(r.t > 0 ? "inf" : "-inf") : Json(r.t)},
            {"df", r.df},
            {"p", r.p},
            {"d", r.d ? Json(*r.d) : Json(nullptr)},
            {"alpha_corrected", r.alpha_corrected},
            {"significant", r.significant},
            {"degenerate", r.degenerate}};
    attributes[attr] = ja;
    std::snprintf(buf, sizeof buf, "%-16s %9.3f %8.3f %9.3f %8.3f %8.3f %4d %9.4g %8s %4s\n", attr, ma, sa, mb, sb,
                  r.t, r.df, r.p, r.d ? std::to_string(*r.d).substr(0, 7).c_str() : "n/a",
                  r.significant ? "yes" : "no");
    txt << buf;
  }

  const Json icc = icc_section(ratings);
  txt << "\nICC(2,1): ";
  if (icc.at("computed").get<bool>()) {
    std::snprintf(buf, sizeof buf, "%.4f over %zu cells x %zu coders\n", icc.at("value").get<double>(),
                  icc.at("n_subjects").get<std::size_t>(), icc.at("k_raters").get<std::size_t>());
    txt << buf;
  } else {
    txt << icc.at("reason").get<std::string>() << "\n";
  }

  Json per_session = Json::array();
  txt << "\nsessions:\n";
  for (const auto& a : attrs) {
    auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
    per_session.push_back({{"session_id", a.id},
                           {"condition", a.condition},
                           {"participant", a.participant},
                           {"response_time_s", opt(a.response_time_s)},
                           {"quality", opt(a.quality)},
                           {"quality_fraction", a.quality_fraction ? Json(*a.quality_fraction) : Json(nullptr)},
                           {"turn_balance", opt(a.turn_balance)},
                           {"topic_shifts", opt(a.topic_shifts)}});
    std::snprintf(buf, sizeof buf, "  %-20s %-12s %-8s quality %s\n", a.id.c_str(), a.condition.c_str(),
                  a.participant.c_str(), a.quality_fraction ? a.quality_fraction->c_str() : "n/a");
    txt << buf;
  }

  Report out;
  out.json = {{"conditions", conds},
              {"pairing_key", cfg.pairing_key},
              {"latency_aggregation",
               cfg.latency == LatencyAggregation::Pooled ? "pooled" : "per_conversation"},
              {"alpha", cfg.alpha},
              {"attributes", attributes},
              {"icc", icc},
              {"sessions", per_session},
              {"skipped", skipped}};
  out.text = txt.str();
  return out;
}

}  // namespace parley::eval
