#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "parley/agents.hpp"
#include "parley/audio.hpp"
#include "parley/engine.hpp"
#include "parley/eval.hpp"
#include "parley/services.hpp"
#include "parley/session.hpp"
#include "parley/speak.hpp"

namespace parley {

struct ServiceEndpoints {
  std::string asr_url;
  std::string llm_url;
  std::string llm_model = "gpt-4o-mini";
  std::string tts_url;
  std::string tts_voice = "default";
};

enum class AgentMode { Rule, Llm };

struct AppConfig {
  EngineConfig engine;
  AgentConfig agents;
  AgentMode agent_mode = AgentMode::Rule;
  AgentMode responder_mode = AgentMode::Llm;
  VadConfig vad;
  SpeakConfig speak;
  ServiceEndpoints services;
  std::string prompts_dir;
  eval::ReportConfig analysis;
};

namespace detail {

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return Json::parse(ss.str());
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
}

inline void only_keys(const Json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) throw ParseError(where + ": unknown key '" + k + "'");
  }
}

inline AgentMode agent_mode_from_string(const std::string& s) {
  if (s == "rule") return AgentMode::Rule;
  if (s == "llm") return AgentMode::Llm;
  throw ParseError("unknown agent mode '" + s + "' (rule or llm)");
}

}  // namespace detail

inline AppConfig app_config_from_json(const Json& j) {
  AppConfig c;
  detail::only_keys(j, "config", {"engine", "agents", "vad", "speak", "services", "prompts_dir", "analysis"});
  try {
    if (j.contains("engine")) {
      const auto& e = j.at("engine");
      detail::only_keys(e, "engine", {"gate_window_ms", "end_silence_ms", "barge_in", "fallback_sentence"});
      c.engine.gate_window_ms = e.value("gate_window_ms", c.engine.gate_window_ms);
      c.engine.end_silence_ms = e.value("end_silence_ms", c.engine.end_silence_ms);
      const auto barge = e.value("barge_in", std::string("finish_sentence"));
      if (barge == "finish_sentence") c.engine.barge_in = BargeInPolicy::FinishSentence;
      else if (barge == "immediate") c.engine.barge_in = BargeInPolicy::Immediate;
      else throw ParseError("engine.barge_in: expected finish_sentence or immediate");
      c.engine.fallback_sentence = e.value("fallback_sentence", c.engine.fallback_sentence);
    }
    c.agents.gate_window_ms = c.engine.gate_window_ms;
    c.agents.end_silence_ms = c.engine.end_silence_ms;
    if (j.contains("agents")) {
      const auto& a = j.at("agents");
      detail::only_keys(a, "agents", {"mode", "responder", "fillers", "connectives"});
      c.agent_mode = detail::agent_mode_from_string(a.value("mode", std::string("rule")));
      c.responder_mode = detail::agent_mode_from_string(a.value("responder", std::string("llm")));
      c.agents.fillers = a.value("fillers", c.agents.fillers);
      c.agents.connectives = a.value("connectives", c.agents.connectives);
    }
    if (j.contains("vad")) {
      const auto& v = j.at("vad");
      detail::only_keys(v, "vad", {"rms_threshold", "hangover_ms"});
      c.vad.rms_threshold = v.value("rms_threshold", c.vad.rms_threshold);
      c.vad.hangover_ms = v.value("hangover_ms", c.vad.hangover_ms);
    }
    if (j.contains("speak")) {
      const auto& s = j.at("speak");
      detail::only_keys(s, "speak", {"mode", "max_inflight", "voice", "fallback_silence_ms", "abbreviations",
                                     "max_segment_chars"});
      const auto mode = s.value("mode", std::string("streamed"));
      if (mode == "streamed") c.speak.mode = SpeakMode::Streamed;
      else if (mode == "batch") c.speak.mode = SpeakMode::Batch;
      else throw ParseError("speak.mode: expected streamed or batch");
      c.speak.max_inflight = s.value("max_inflight", c.speak.max_inflight);
      if (c.speak.max_inflight < 1) throw ParseError("speak.max_inflight must be >= 1");
      c.speak.voice = s.value("voice", c.speak.voice);
      c.speak.fallback_silence_ms = s.value("fallback_silence_ms", c.speak.fallback_silence_ms);
      c.speak.segmenter.abbreviations = s.value("abbreviations", c.speak.segmenter.abbreviations);
      c.speak.segmenter.max_segment_chars = s.value("max_segment_chars", c.speak.segmenter.max_segment_chars);
    }
    if (j.contains("services")) {
      const auto& s = j.at("services");
      detail::only_keys(s, "services", {"asr_url", "llm_url", "llm_model", "tts_url", "tts_voice"});
      c.services.asr_url = s.value("asr_url", std::string());
      c.services.llm_url = s.value("llm_url", std::string());
      c.services.llm_model = s.value("llm_model", c.services.llm_model);
      c.services.tts_url = s.value("tts_url", std::string());
      c.services.tts_voice = s.value("tts_voice", c.services.tts_voice);
    }
    c.prompts_dir = j.value("prompts_dir", std::string());
    if (j.contains("analysis")) {
      const auto& a = j.at("analysis");
      detail::only_keys(a, "analysis", {"conditions", "pairing_key", "latency_aggregation", "alpha"});
      c.analysis.conditions = a.value("conditions", std::vector<std::string>{});
      c.analysis.pairing_key = a.value("pairing_key", c.analysis.pairing_key);
      const auto agg = a.value("latency_aggregation", std::string("per_conversation"));
      if (agg == "per_conversation") c.analysis.latency = eval::LatencyAggregation::PerConversation;
      else if (agg == "pooled") c.analysis.latency = eval::LatencyAggregation::Pooled;
      else throw ParseError("analysis.latency_aggregation: expected per_conversation or pooled");
      c.analysis.alpha = a.value("alpha", c.analysis.alpha);
    }
  } catch (const Json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return c;
}

inline AppConfig load_app_config(const std::filesystem::path& path) {
  return app_config_from_json(detail::read_json_file(path));
}

// ─── Mock scenario ───────────────────────────────────────────────────────────

// Everything a simulated session needs besides the app config: the user's
// audio (synthetic speech intervals or a WAV file), the ASR transcript
// script, scripted LLM replies and the TTS latency model.
struct MockScenario {
  std::string session_id = "sim";
  std::string condition;
  std::string started_at = "1970-01-01T00:00:00Z";
  std::map<std::string, std::string> metadata;

  Millis duration_ms = 0;
  std::vector<SyntheticSpeechSource::Interval> speech;
  double amplitude = 0.25;
  std::string wav_path;

  MockAsrScript asr;
  MockLlmScript llm;
  MockTtsScript tts;
};

inline MockScenario scenario_from_json(const Json& j, std::uint64_t seed,
                                       const std::filesystem::path& base_dir = {}) {
  MockScenario s;
  detail::only_keys(j, "scenario",
                    {"session_id", "condition", "started_at", "metadata", "audio", "asr", "llm", "tts"});
  try {
    s.session_id = j.value("session_id", s.session_id);
    s.condition = j.value("condition", s.condition);
    s.started_at = j.value("started_at", s.started_at);
    s.metadata = j.value("metadata", s.metadata);
    if (j.contains("audio")) {
      const auto& a = j.at("audio");
      detail::only_keys(a, "audio", {"duration_ms", "speech", "amplitude", "wav"});
      s.duration_ms = a.value("duration_ms", Millis{0});
      s.amplitude = a.value("amplitude", s.amplitude);
      for (const auto& iv : a.value("speech", Json::array())) {
        s.speech.push_back({iv.at(0).get<Millis>(), iv.at(1).get<Millis>()});
      }
      if (a.contains("wav")) {
        const std::filesystem::path p = a.at("wav").get<std::string>();
        s.wav_path = (p.is_relative() && !base_dir.empty() ? base_dir / p : p).string();
      }
    }
    if (j.contains("asr")) s.asr = j.at("asr").get<MockAsrScript>();
    if (j.contains("llm")) s.llm = j.at("llm").get<MockLlmScript>();
    if (j.contains("tts")) s.tts = mock_tts_script_from_json(j.at("tts"), seed);
  } catch (const Json::exception& e) {
    throw ParseError(std::string("scenario: ") + e.what());
  }
  return s;
}

inline MockScenario load_scenario(const std::filesystem::path& path, std::uint64_t seed) {
  return scenario_from_json(detail::read_json_file(path), seed, path.parent_path());
}

inline SessionConfig session_config(const AppConfig& app, const MockScenario& sc) {
  SessionConfig c;
  c.session_id = sc.session_id;
  c.condition = sc.condition;
  c.started_at = sc.started_at;
  c.metadata = sc.metadata;
  c.vad = app.vad;
  c.engine = app.engine;
  c.speak = app.speak;
  return c;
}

// Owns the mock services and agents for one simulated session.
class SimulatedSession {
 public:
  SimulatedSession(const AppConfig& app, const MockScenario& sc)
      : config_(session_config(app, sc)),
        prompts_(app.prompts_dir.empty() ? PromptSet{} : load_prompt_set(app.prompts_dir)),
        asr_(sc.asr),
        chat_(sc.llm),
        tts_(sc.tts) {
    if (!sc.wav_path.empty()) {
      frames_ = open_wav_replay(std::filesystem::path(sc.wav_path), ChannelLayout{{ChannelRole::Asr}});
    } else {
      frames_ = std::make_unique<SyntheticSpeechSource>(sc.speech, sc.duration_ms, sc.amplitude);
    }
    if (app.agent_mode == AgentMode::Llm) {
      gate_ = std::make_unique<LlmGate>(chat_, prompts_.gate, app.agents);
      cleaner_ = std::make_unique<LlmCleaner>(chat_, prompts_.cleaner, app.agents);
      completion_ = std::make_unique<LlmCompletion>(chat_, prompts_.completion, app.agents);
    } else {
      gate_ = std::make_unique<RuleGate>(app.agents);
      cleaner_ = std::make_unique<RuleCleaner>(app.agents);
      completion_ = std::make_unique<RuleCompletion>(app.agents);
    }
    if (app.responder_mode == AgentMode::Llm) {
      responder_ = std::make_unique<LlmResponder>(chat_, prompts_.responder);
    } else {
      responder_ = std::make_unique<RuleResponder>();
    }
  }

  ConversationSession run(LogSink& log, Clock& clock, SessionTrace* trace = nullptr, AudioSink* sink = nullptr) {
    SessionServices svc{*frames_, asr_, *gate_, *cleaner_, *completion_, *responder_, tts_, sink};
    return run_session(config_, svc, log, clock, trace);
  }

  const SessionConfig& config() const { return config_; }

 private:
  SessionConfig config_;
  PromptSet prompts_;
  std::unique_ptr<FrameSource> frames_;
  MockAsrSession asr_;
  MockChatClient chat_;
  MockTtsClient tts_;
  std::unique_ptr<SpeechGate> gate_;
  std::unique_ptr<TranscriptCleaner> cleaner_;
  std::unique_ptr<CompletionJudge> completion_;
  std::unique_ptr<Responder> responder_;
};

}  // namespace parley
