#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "parley/error.hpp"

namespace parley {

// Text with {name} placeholders. Rendering fails if any placeholder in the
// template has no binding.
struct PromptTemplate {
  std::string name;
  std::string text;
  std::string output_note;  // what the model is expected to answer

  std::set<std::string> placeholders() const {
    std::set<std::string> out;
    std::size_t i = 0;
    while ((i = text.find('{', i)) != std::string::npos) {
      const auto close = text.find('}', i);
      if (close == std::string::npos) break;
      out.insert(text.substr(i + 1, close - i - 1));
      i = close + 1;
    }
    return out;
  }

  std::string render(const std::map<std::string, std::string>& bindings) const {
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
      const auto open = text.find('{', i);
      if (open == std::string::npos) break;
      const auto close = text.find('}', open);
      if (close == std::string::npos) break;
      out.append(text, i, open - i);
      const std::string key = text.substr(open + 1, close - open - 1);
      auto it = bindings.find(key);
      if (it == bindings.end()) {
        throw ContractError("prompt '" + name + "': placeholder {" + key + "} is unbound");
      }
      out += it->second;
      i = close + 1;
    }
    out.append(text, i, std::string::npos);
    return out;
  }
};

struct PromptSet {
  PromptTemplate gate{
      "gate",
      "Recent speech recognition events:\n{history}\nLatest text: \"{utterance}\"\n"
      "Milliseconds since the last detected speech: {silence_ms}\n"
      "Is the user still speaking? Answer with exactly one word: YES or NO.",
      "YES or NO"};
  PromptTemplate cleaner{
      "cleaner",
      "Conversation so far:\n{history}\nRaw transcript: \"{utterance}\"\n"
      "Remove filler words and accidental repetitions. Do not add, reorder or "
      "remove any other words. Reply with the cleaned transcript only.",
      "cleaned transcript"};
  PromptTemplate completion{
      "completion",
      "Conversation so far:\n{history}\nUser utterance: \"{utterance}\"\n"
      "Silence since the user stopped: {silence_ms} ms.\n"
      "Has the user finished their turn? Answer with exactly one word: YES or NO.",
      "YES or NO"};
  PromptTemplate responder{
      "responder",
      "You are a friendly small humanoid robot having a spoken conversation. "
      "Keep replies short: two or three sentences.",
      "reply text"};
};

// Loads <dir>/{gate,cleaner,completion,responder}.txt; missing files keep the
// built-in text.
inline PromptSet load_prompt_set(const std::filesystem::path& dir) {
  PromptSet set;
  auto load = [&](PromptTemplate& t) {
    const auto path = dir / (t.name + ".txt");
    std::ifstream f(path);
    if (!f) return;
    std::ostringstream ss;
    ss << f.rdbuf();
    t.text = ss.str();
  };
  load(set.gate);
  load(set.cleaner);
  load(set.completion);
  load(set.responder);
  return set;
}

}  // namespace parley
