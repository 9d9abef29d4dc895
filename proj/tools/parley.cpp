// parley: run, replay, annotate, score and analyse conversations.
//
// Exit codes: 0 success, 1 runtime or service failure, 2 usage or parse
// failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "parley/config.hpp"
#include "parley/parley.hpp"
#include "parley/remote.hpp"

namespace fs = std::filesystem;
using namespace parley;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  bool virtual_clock = false;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

AppConfig load_config_or_default(const Globals& g) {
  if (g.config_path.empty()) return AppConfig{};
  if (!fs::exists(g.config_path)) throw UsageError("config file not found: " + g.config_path);
  return load_app_config(g.config_path);
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw UsageError("cannot open " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << content;
  if (!f) throw IoError("cannot write " + p.string(), 0);
}

std::vector<ConversationSession> load_sessions(const std::vector<std::string>& paths) {
  std::vector<ConversationSession> out;
  for (const auto& p : paths) {
    std::vector<std::string> warnings;
    out.push_back(load_session(p, &warnings));
    for (const auto& w : warnings) std::cerr << "warning: " << p << ": " << w << "\n";
  }
  return out;
}

std::vector<eval::TurnRating> load_ratings(const std::vector<std::string>& paths) {
  std::vector<eval::TurnRating> out;
  for (const auto& p : paths) {
    try {
      auto rs = eval::parse_ratings_csv(read_file(p));
      out.insert(out.end(), rs.begin(), rs.end());
    } catch (const ParseError& e) {
      throw ParseError(p + ": " + e.what(), e.offset());
    }
  }
  return out;
}

std::string summary_line(const ConversationSession& s) {
  std::ostringstream o;
  o << "session " << s.id << ": " << s.turns.size() << " turns";
  if (!s.turns.empty()) {
    const double mean = std::accumulate(s.turns.begin(), s.turns.end(), 0.0,
                                        [](double acc, const Turn& t) { return acc + double(t.response_latency_ms); }) /
                        double(s.turns.size());
    o << ", mean latency " << std::fixed << std::setprecision(1) << mean << " ms";
  }
  if (auto it = s.metadata.find("error"); it != s.metadata.end()) o << ", error: " << it->second;
  return o.str();
}

// ─── run ─────────────────────────────────────────────────────────────────────

struct RunOptions {
  std::string script;
  bool live = false;
  std::string wav;
  std::string session_id = "live";
  std::string condition;
};

int cmd_run(const Globals& g, const RunOptions& o) {
  if (g.config_path.empty()) throw UsageError("run: --config is required");
  const AppConfig app = load_config_or_default(g);
  fs::create_directories(g.out_dir);
  VirtualClock vclock;
  WallClock wclock;
  Clock& clock = g.virtual_clock ? static_cast<Clock&>(vclock) : static_cast<Clock&>(wclock);

  ConversationSession session;
  SessionTrace trace;
  std::string id;
  if (!o.live) {
    if (o.script.empty()) throw UsageError("run: --script is required in simulation mode");
    const auto scenario = load_scenario(o.script, g.seed.value_or(0));
    id = scenario.session_id;
    SimulatedSession sim(app, scenario);
    JsonlLog log(fs::path(g.out_dir) / (id + ".jsonl"));
    session = sim.run(log, clock, &trace);
  } else {
    if (g.virtual_clock) throw UsageError("run: --live cannot use --virtual-clock");
    if (o.wav.empty()) throw UsageError("run: --live needs --wav as the microphone source");
    const auto& s = app.services;
    if (s.asr_url.empty() || s.llm_url.empty() || s.tts_url.empty()) {
      throw UsageError("run: --live needs services.asr_url, llm_url and tts_url in the config");
    }
    id = o.session_id;
    auto frames = open_wav_replay(fs::path(o.wav), ChannelLayout{{ChannelRole::Asr}});
    remote::RemoteAsrSession asr(s.asr_url);
    remote::RemoteChatClient chat(s.llm_url, s.llm_model);
    remote::RemoteTtsClient tts(s.tts_url);
    const PromptSet prompts = app.prompts_dir.empty() ? PromptSet{} : load_prompt_set(app.prompts_dir);
    std::unique_ptr<SpeechGate> gate;
    std::unique_ptr<TranscriptCleaner> cleaner;
    std::unique_ptr<CompletionJudge> completion;
    if (app.agent_mode == AgentMode::Llm) {
      gate = std::make_unique<LlmGate>(chat, prompts.gate, app.agents);
      cleaner = std::make_unique<LlmCleaner>(chat, prompts.cleaner, app.agents);
      completion = std::make_unique<LlmCompletion>(chat, prompts.completion, app.agents);
    } else {
      gate = std::make_unique<RuleGate>(app.agents);
      cleaner = std::make_unique<RuleCleaner>(app.agents);
      completion = std::make_unique<RuleCompletion>(app.agents);
    }
    std::unique_ptr<Responder> responder;
    if (app.responder_mode == AgentMode::Llm) responder = std::make_unique<LlmResponder>(chat, prompts.responder);
    else responder = std::make_unique<RuleResponder>();
    BufferAudioSink sink;
    SessionServices svc{*frames, asr, *gate, *cleaner, *completion, *responder, tts, &sink};
    MockScenario meta;
    meta.session_id = id;
    meta.condition = o.condition;
    meta.started_at = "";
    SessionConfig cfg = session_config(app, meta);
    JsonlLog log(fs::path(g.out_dir) / (id + ".jsonl"));
    session = run_session(cfg, svc, log, clock, &trace);
    write_wav(fs::path(g.out_dir) / (id + ".robot.wav"), WavData{1, kSampleRateHz, 16, sink.pcm()});
  }

  std::string actions;
  for (const auto& line : trace.action_log) actions += line + "\n";
  write_file(fs::path(g.out_dir) / (id + ".actions.jsonl"), actions);
  std::cout << summary_line(session) << "\n";
  return session.metadata.count("error") ? kRuntime : kOk;
}

// ─── replay ──────────────────────────────────────────────────────────────────

int cmd_replay(const Globals& g, const std::string& log_path, const std::string& actions_path) {
  const AppConfig app = load_config_or_default(g);
  auto log = read_log(log_path);
  for (const auto& w : log.warnings) std::cerr << "warning: " << w << "\n";
  const auto session = session_from_records(log.records);

  std::vector<EngineEvent> events;
  std::vector<LatencyTrace> recorded;
  for (const auto& r : log.records) {
    if (r.kind == "engine_event") events.push_back(event_from_json(r.payload));
    if (r.kind == "latency_trace") recorded.push_back(r.payload.at("trace").get<LatencyTrace>());
  }
  const auto lines = replay_actions(events, app.engine);
  const auto derived = derive_latency_traces(events, app.engine, app.speak);

  bool ok = true;
  std::cout << summary_line(session) << "\n";
  std::cout << "replayed " << events.size() << " events -> " << lines.size() << " actions\n";
  const std::string expected_path =
      actions_path.empty() ? (fs::path(log_path).parent_path() / (session.id + ".actions.jsonl")).string()
                           : actions_path;
  if (fs::exists(expected_path)) {
    std::string replayed;
    for (const auto& l : lines) replayed += l + "\n";
    const bool same = replayed == read_file(expected_path);
    std::cout << "action log " << (same ? "identical" : "DIFFERS") << " (" << expected_path << ")\n";
    ok = ok && same;
  }
  const bool traces_same = derived == recorded;
  std::cout << "latency traces " << (traces_same ? "identical" : "DIFFER") << " (" << recorded.size()
            << " recorded)\n";
  ok = ok && traces_same;
  return ok ? kOk : kRuntime;
}

// ─── annotate / score / stats ────────────────────────────────────────────────

int cmd_annotate(const std::string& log_path, const std::string& coder, const std::string& out_path,
                 const std::string& template_path) {
  const auto session = load_session(log_path);
  if (!template_path.empty()) write_file(template_path, export_rating_template(session));
  try {
    const auto ratings = eval::annotate(session, coder, std::cin, std::cerr);
    const auto csv_text = eval::ratings_to_csv(ratings, &session);
    if (out_path.empty()) std::cout << csv_text;
    else write_file(out_path, csv_text);
    const auto cq = eval::conversation_quality(eval::dimension_means(ratings));
    std::cerr << "rated " << ratings.size() << " turns, Cq = " << eval::to_string(cq) << "\n";
    return kOk;
  } catch (const eval::PartialRatingsError& e) {
    if (!out_path.empty() && !e.completed().empty()) {
      write_file(out_path, eval::ratings_to_csv(e.completed(), &session));
    }
    throw;
  }
}

int cmd_score(const Globals& g, const std::vector<std::string>& logs, const std::vector<std::string>& ratings_paths) {
  const auto sessions = load_sessions(logs);
  const auto ratings = load_ratings(ratings_paths);
  Json out = Json::array();
  for (const auto& s : sessions) out.push_back(eval::score_session(s, ratings));
  const std::string text = out.dump(2) + "\n";
  std::cout << text;
  if (g.out_dir != ".") write_file(fs::path(g.out_dir) / "score.json", text);
  return kOk;
}

int cmd_stats(const Globals& g, const std::vector<std::string>& logs, const std::vector<std::string>& ratings_paths) {
  const AppConfig app = load_config_or_default(g);
  const auto sessions = load_sessions(logs);
  const auto ratings = load_ratings(ratings_paths);
  const auto rep = eval::report(sessions, ratings, app.analysis);
  std::cout << rep.text;
  write_file(fs::path(g.out_dir) / "report.json", rep.json.dump(2) + "\n");
  return kOk;
}

// ─── bench-latency ───────────────────────────────────────────────────────────

struct BenchOptions {
  std::string script;
  std::optional<Millis> latency_ms;
  bool json = false;
};

int cmd_bench(const Globals& g, const BenchOptions& o) {
  const AppConfig app = load_config_or_default(g);
  const Json j = Json::parse(read_file(o.script));
  TokenStream stream;
  for (const auto& c : j.at("reply")) {
    stream.chunks.push_back({c.value("text", std::string()), c.at("offset_ms").get<Millis>(), c.value("end", false)});
  }
  if (!stream.well_formed()) throw ParseError(o.script + ": reply must end with exactly one end marker");
  MockTtsScript tts_script = mock_tts_script_from_json(j.value("tts", Json::object()), g.seed.value_or(0));
  if (o.latency_ms) tts_script.latency = FixedLatency{*o.latency_ms};

  Json out = Json::object();
  std::optional<Millis> ttfa[2];
  const SpeakMode modes[2] = {SpeakMode::Streamed, SpeakMode::Batch};
  for (int m = 0; m < 2; ++m) {
    MockTtsClient tts(tts_script);
    SpeakConfig cfg = app.speak;
    cfg.mode = modes[m];
    const auto run = simulate_speak(stream, tts, cfg, 0);
    ttfa[m] = run.trace.t_first_audio_out;
    out[m == 0 ? "streamed" : "batch"] = {{"t_first_audio_out", ttfa[m] ? Json(*ttfa[m]) : Json(nullptr)},
                                          {"t_first_sentence_closed",
                                           run.trace.t_first_sentence_closed ? Json(*run.trace.t_first_sentence_closed)
                                                                             : Json(nullptr)},
                                          {"segments", run.segments.size()}};
  }
  if (ttfa[0] && ttfa[1]) out["delta_ms"] = *ttfa[0] - *ttfa[1];
  if (o.json) {
    std::cout << out.dump(2) << "\n";
    return kOk;
  }
  auto show = [](const std::optional<Millis>& v) { return v ? std::to_string(*v) + " ms" : std::string("n/a"); };
  std::cout << "mode       time-to-first-audio\n";
  std::cout << "streamed   " << show(ttfa[0]) << "\n";
  std::cout << "batch      " << show(ttfa[1]) << "\n";
  if (ttfa[0] && ttfa[1]) std::cout << "delta      " << (*ttfa[0] - *ttfa[1]) << " ms\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"parley: conversational pipeline simulator and evaluation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config_path, "JSON config file");
  app.add_option("--seed", g.seed, "seed for randomized mock latencies");
  app.add_option("--out-dir", g.out_dir, "directory for logs and reports");
  app.add_flag("--virtual-clock", g.virtual_clock, "advance time to the next event instead of sleeping");

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "run a simulated or live session");
  run->add_option("--script", run_opts.script, "mock scenario JSON (simulation)");
  run->add_flag("--live", run_opts.live, "use the remote services from the config");
  run->add_option("--wav", run_opts.wav, "16 kHz WAV used as the microphone in live mode");
  run->add_option("--session-id", run_opts.session_id, "session id in live mode");
  run->add_option("--condition", run_opts.condition, "condition label in live mode");

  std::string replay_log, replay_actions_path;
  auto* replay = app.add_subcommand("replay", "re-run the engine over a recorded log and compare");
  replay->add_option("log", replay_log, "session log (JSONL)")->required();
  replay->add_option("--actions", replay_actions_path, "recorded action log to compare against");

  std::string ann_log, ann_coder, ann_out, ann_template;
  auto* annotate = app.add_subcommand("annotate", "rate a session turn by turn (answers on stdin)");
  annotate->add_option("log", ann_log, "session log (JSONL)")->required();
  annotate->add_option("--coder", ann_coder, "coder id")->required();
  annotate->add_option("--out", ann_out, "ratings CSV to write (default stdout)");
  annotate->add_option("--template", ann_template, "also write the empty rating template here");

  std::vector<std::string> score_logs, score_ratings;
  auto* score = app.add_subcommand("score", "per-session quality, balance and topic shifts");
  score->add_option("logs", score_logs, "session logs")->required();
  score->add_option("--ratings", score_ratings, "ratings CSV files")->required();

  std::vector<std::string> stats_logs, stats_ratings;
  auto* stats_cmd = app.add_subcommand("stats", "paired comparison report across two conditions");
  stats_cmd->add_option("logs", stats_logs, "session logs")->required();
  stats_cmd->add_option("--ratings", stats_ratings, "ratings CSV files")->required();

  BenchOptions bench_opts;
  auto* bench = app.add_subcommand("bench-latency", "streamed vs batch time-to-first-audio");
  bench->add_option("--script", bench_opts.script, "reply script JSON")->required();
  bench->add_option("--latency-ms", bench_opts.latency_ms, "override with a fixed TTS latency");
  bench->add_flag("--json", bench_opts.json, "machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (g.virtual_clock && !g.seed) throw UsageError("--virtual-clock requires --seed");
    if (*run) return cmd_run(g, run_opts);
    if (*replay) return cmd_replay(g, replay_log, replay_actions_path);
    if (*annotate) return cmd_annotate(ann_log, ann_coder, ann_out, ann_template);
    if (*score) return cmd_score(g, score_logs, score_ratings);
    if (*stats_cmd) return cmd_stats(g, stats_logs, stats_ratings);
    if (*bench) return cmd_bench(g, bench_opts);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const eval::PartialRatingsError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const eval::UnpairedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
