#pragma once

// In-memory sessions and ratings shared by the evaluation and CLI tests.

#include <string>
#include <tuple>
#include <vector>

#include "parley/eval.hpp"

namespace parley::study {

inline eval::TurnRating rating(std::string session, int turn, std::string coder, std::array<int, 6> s,
                               eval::TopicShift shift = eval::TopicShift::None) {
  return eval::TurnRating{std::move(session), turn, std::move(coder), s, shift};
}

// Turns given as (user text, robot text, latency ms).
inline ConversationSession session(std::string id, std::string condition, std::string participant,
                                   const std::vector<std::tuple<std::string, std::string, Millis>>& turns) {
  ConversationSession s;
  s.id = std::move(id);
  s.condition = std::move(condition);
  s.metadata["participant"] = std::move(participant);
  Millis t = 0;
  int i = 0;
  for (const auto& [u, r, latency] : turns) {
    Turn turn;
    turn.index = i++;
    turn.user = make_utterance(Speaker::User, u, t, t + 1000);
    turn.robot = make_utterance(Speaker::Robot, r, t + 1000 + latency, t + 3000 + latency);
    turn.response_latency_ms = latency;
    s.turns.push_back(turn);
    t += 5000 + latency;
  }
  return s;
}

inline std::string words(int n) {
  std::string s;
  for (int i = 0; i < n; ++i) s += (i ? " w" : "w") + std::to_string(i);
  return s;
}

struct Study {
  std::vector<ConversationSession> sessions;
  std::vector<eval::TurnRating> ratings;
};

// Three participants, each seen once per condition. Streamed replies are
// faster, longer and rated higher. Coders a and b disagree on one cell per
// session.
inline Study make_study() {
  using eval::TopicShift;
  Study st;
  const std::vector<Millis> fast{600, 700, 800}, slow{1200, 1500, 1100};
  for (int p = 0; p < 3; ++p) {
    const std::string pid = "p" + std::to_string(p + 1);
    st.sessions.push_back(session(pid + "-s", "streamed", pid,
                                  {{words(10), words(30 + p), fast[p]}, {words(5), words(20), fast[p] + 100}}));
    st.sessions.push_back(session(pid + "-b", "batch", pid,
                                  {{words(10), words(10 + p), slow[p]}, {words(5), words(5), slow[p] + 50}}));
    for (int t = 0; t < 2; ++t) {
      for (const char* coder : {"a", "b"}) {
        const int bump = (coder[0] == 'b' && t == 1) ? -1 : 0;
        st.ratings.push_back(rating(pid + "-s", t, coder, {3, 3, 3 + bump, 3, 3, 3}));
        st.ratings.push_back(rating(pid + "-b", t, coder, {2, 2, 2, 3 + bump, 2, 1},
                                    t == 0 && p != 1 ? TopicShift::Unrelated : TopicShift::None));
      }
    }
  }
  return st;
}

}  // namespace parley::study
