#pragma once

// HTTP shells for live mode. Each speaks a small JSON protocol; adapting to
// a particular vendor means changing the request/response mapping here.

#include <chrono>
#include <cstdlib>
#include <string>
#include <utility>

#include <httplib.h>

#include "parley/audio.hpp"
#include "parley/services.hpp"

namespace parley::remote {

struct Url {
  std::string base;  // scheme://host[:port]
  std::string path;  // starts with '/'
};

inline Url split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ContractError("url without scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

inline std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? v : "";
}

namespace detail {

inline void check(const httplib::Result& res, const std::string& stage) {
  if (!res) throw TransportError(stage, httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    throw ServiceError(stage, "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200),
                       res->status >= 500);
  }
}

inline Millis elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// OpenAI-style chat completions. The API key comes from PARLEY_LLM_API_KEY.
class RemoteChatClient final : public ChatClient {
 public:
  RemoteChatClient(const std::string& url, std::string model, std::chrono::seconds timeout = std::chrono::seconds(30))
      : url_(split_url(url)), client_(url_.base), model_(std::move(model)) {
    client_.set_connection_timeout(timeout);
    client_.set_read_timeout(timeout);
    if (auto key = env_or_empty("PARLEY_LLM_API_KEY"); !key.empty()) client_.set_bearer_token_auth(key);
  }

  TokenStream chat(const ChatRequest& request) override {
    check_chat_request(request);
    Json body{{"model", model_}, {"temperature", request.temperature}, {"messages", Json::array()}};
    if (!request.system_prompt.empty()) {
      body["messages"].push_back({{"role", "system"}, {"content", request.system_prompt}});
    }
    for (const auto& m : request.messages) body["messages"].push_back({{"role", m.role}, {"content", m.text}});

    const auto t0 = std::chrono::steady_clock::now();
    auto res = client_.Post(url_.path, body.dump(), "application/json");
    detail::check(res, "llm");
    std::string content;
    try {
      content = Json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const Json::exception& e) {
      throw ServiceError("llm", std::string("unexpected response: ") + e.what());
    }
    return make_token_stream(content, Chunking::Whole, detail::elapsed_ms(t0), 0);
  }

 private:
  Url url_;
  httplib::Client client_;
  std::string model_;
};

// POST {"text", "voice"}; the reply is a 16 kHz mono WAV or raw 16-bit PCM.
class RemoteTtsClient final : public TtsClient {
 public:
  explicit RemoteTtsClient(const std::string& url, std::chrono::seconds timeout = std::chrono::seconds(30))
      : url_(split_url(url)), client_(url_.base) {
    client_.set_connection_timeout(timeout);
    client_.set_read_timeout(timeout);
  }

  TtsResult synthesize(const TtsRequest& request) override {
    if (text::trim(request.text).empty()) throw ContractError("synthesize: empty sentence");
    const auto t0 = std::chrono::steady_clock::now();
    auto res = client_.Post(url_.path, Json{{"text", request.text}, {"voice", request.voice}}.dump(),
                            "application/json");
    detail::check(res, "tts");
    TtsResult out;
    out.request_index = request.request_index;
    out.synth_latency_ms = detail::elapsed_ms(t0);
    const auto& b = res->body;
    const auto* bytes = reinterpret_cast<const unsigned char*>(b.data());
    if (b.size() >= 4 && b.compare(0, 4, "RIFF") == 0) {
      WavData wav;
      try {
        wav = parse_wav({bytes, b.size()});
      } catch (const ParseError& e) {
        throw ServiceError("tts", std::string("bad WAV: ") + e.what());
      }
      if (wav.sample_rate_hz != kSampleRateHz || wav.channels != 1) {
        throw ServiceError("tts", "expected 16 kHz mono audio");
      }
      out.audio = std::move(wav.interleaved);
    } else {
      out.audio.resize(b.size() / 2);
      for (std::size_t i = 0; i < out.audio.size(); ++i) {
        out.audio[i] = static_cast<std::int16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
      }
    }
    return out;
  }

 private:
  Url url_;
  httplib::Client client_;
};

// Sends the ASR channel in blocks of raw PCM (POST ...?t_ms=<block start>)
// and expects {"events": [TranscriptEvent...]} back.
class RemoteAsrSession final : public AsrSession {
 public:
  explicit RemoteAsrSession(const std::string& url, Millis block_ms = 320)
      : url_(split_url(url)), client_(url_.base), block_ms_(block_ms) {
    client_.set_connection_timeout(std::chrono::seconds(10));
    client_.set_read_timeout(std::chrono::seconds(10));
  }

 protected:
  void on_push(const AudioFrame& frame) override {
    if (pcm_.empty()) block_start_ = frame.t_ms;
    for (auto s : frame.samples) {
      pcm_ += static_cast<char>(s & 0xFF);
      pcm_ += static_cast<char>((s >> 8) & 0xFF);
    }
    block_end_ = frame.end_ms();
    if (block_end_ - block_start_ >= block_ms_) send(false);
  }

  void on_close() override {
    if (!pcm_.empty()) send(true);
  }

 private:
  void send(bool final_block) {
    const std::string path = url_.path + "?t_ms=" + std::to_string(block_start_) + (final_block ? "&final=1" : "");
    auto res = client_.Post(path, pcm_, "application/octet-stream");
    pcm_.clear();
    detail::check(res, "asr");
    try {
      const auto j = Json::parse(res->body);
      for (const auto& e : j.value("events", Json::array())) emit(block_end_, e.get<TranscriptEvent>());
    } catch (const Json::exception& e) {
      throw ServiceError("asr", std::string("unexpected response: ") + e.what());
    } catch (const ParseError& e) {
      throw ServiceError("asr", std::string("unexpected response: ") + e.what());
    }
  }

  Url url_;
  httplib::Client client_;
  Millis block_ms_;
  std::string pcm_;
  Millis block_start_ = 0;
  Millis block_end_ = 0;
};

}  // namespace parley::remote
