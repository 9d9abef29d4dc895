#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "parley/core.hpp"
#include "parley/error.hpp"

namespace parley {

// Channel roles in file/device channel order. A layout may declare a subset
// of the six roles (e.g. a mono file carrying only the ASR beam).
struct ChannelLayout {
  std::vector<ChannelRole> roles;

  static ChannelLayout full() { return {{kAllChannelRoles.begin(), kAllChannelRoles.end()}}; }

  std::size_t size() const { return roles.size(); }
  bool contains(ChannelRole r) const {
    return std::find(roles.begin(), roles.end(), r) != roles.end();
  }
  bool operator==(const ChannelLayout&) const = default;
};

// Yields frames in timestamp order; frames sharing a timestamp come in layout
// order.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual const ChannelLayout& layout() const = 0;
  virtual std::optional<AudioFrame> next() = 0;
};

inline constexpr Millis kDefaultFrameMs = 16;

// ─── WAV ─────────────────────────────────────────────────────────────────────

struct WavData {
  int channels = 0;
  int sample_rate_hz = 0;
  int bits_per_sample = 0;
  std::vector<std::int16_t> interleaved;

  std::size_t frames() const {
    return channels ? interleaved.size() / static_cast<std::size_t>(channels) : 0;
  }
};

namespace detail {

inline std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}
inline std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}
inline void put32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace detail

// Parses a RIFF/WAVE byte buffer. Only integer PCM is understood; the sample
// rate and width checks belong to the caller so it can name the mismatch.
inline WavData parse_wav(std::span<const unsigned char> bytes) {
  using detail::le16;
  using detail::le32;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw ParseError("not a RIFF/WAVE file", 0);
  }
  WavData wav;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t size = le32(hdr + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw ParseError("truncated WAV chunk", pos);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16) throw ParseError("short fmt chunk", pos);
      const unsigned char* f = bytes.data() + body;
      std::uint16_t format = le16(f);
      if (format == 0xFFFE && size >= 26) format = le16(f + 24);  // WAVE_FORMAT_EXTENSIBLE
      if (format != 1) throw ParseError("unsupported WAV encoding (not integer PCM)", body);
      wav.channels = le16(f + 2);
      wav.sample_rate_hz = static_cast<int>(le32(f + 4));
      wav.bits_per_sample = le16(f + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) throw ParseError("data chunk before fmt chunk", pos);
      if (wav.bits_per_sample != 16) {
        throw ParseError("unsupported sample width " + std::to_string(wav.bits_per_sample) +
                             " bits (need 16)",
                         pos);
      }
      const std::size_t n = size / 2;
      wav.interleaved.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        wav.interleaved[i] = static_cast<std::int16_t>(le16(bytes.data() + body + 2 * i));
      }
      return wav;
    }
    pos = body + size + (size & 1);
  }
  throw ParseError("WAV file has no data chunk", pos);
}

inline std::string encode_wav(const WavData& wav) {
  std::string out;
  const auto data_bytes = static_cast<std::uint32_t>(wav.interleaved.size() * 2);
  out += "RIFF";
  detail::put32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put32(out, 16);
  detail::put16(out, 1);
  detail::put16(out, static_cast<std::uint16_t>(wav.channels));
  detail::put32(out, static_cast<std::uint32_t>(wav.sample_rate_hz));
  detail::put32(out, static_cast<std::uint32_t>(wav.sample_rate_hz * wav.channels * 2));
  detail::put16(out, static_cast<std::uint16_t>(wav.channels * 2));
  detail::put16(out, 16);
  out += "data";
  detail::put32(out, data_bytes);
  for (auto s : wav.interleaved) detail::put16(out, static_cast<std::uint16_t>(s));
  return out;
}

inline void write_wav(const std::filesystem::path& path, const WavData& wav) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing", 0);
  const auto bytes = encode_wav(wav);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for " + path.string(), 0);
}

class WavReplaySource final : public FrameSource {
 public:
  WavReplaySource(WavData wav, ChannelLayout layout, Millis frame_ms)
      : wav_(std::move(wav)),
        layout_(std::move(layout)),
        frame_samples_(static_cast<std::size_t>(frame_ms * kSamplesPerMs)) {}

  const ChannelLayout& layout() const override { return layout_; }

  std::optional<AudioFrame> next() override {
    const std::size_t total = wav_.frames();
    if (block_start_ >= total) return std::nullopt;
    const std::size_t ch = channel_;
    AudioFrame frame;
    frame.t_ms = static_cast<Millis>(block_start_ / kSamplesPerMs);
    frame.channel = layout_.roles[ch];
    frame.samples.assign(frame_samples_, 0);
    const std::size_t avail = std::min(frame_samples_, total - block_start_);
    const auto nch = static_cast<std::size_t>(wav_.channels);
    for (std::size_t i = 0; i < avail; ++i) {
      frame.samples[i] = wav_.interleaved[(block_start_ + i) * nch + ch];
    }
    frame.padded = avail < frame_samples_;
    if (++channel_ == layout_.size()) {
      channel_ = 0;
      block_start_ += frame_samples_;
    }
    return frame;
  }

 private:
  WavData wav_;
  ChannelLayout layout_;
  std::size_t frame_samples_;
  std::size_t block_start_ = 0;
  std::size_t channel_ = 0;
};

inline std::unique_ptr<FrameSource> open_wav_replay(WavData wav, ChannelLayout layout,
                                                    Millis frame_ms = kDefaultFrameMs) {
  if (wav.sample_rate_hz != kSampleRateHz) {
    throw ParseError("unsupported sample rate " + std::to_string(wav.sample_rate_hz) +
                     " Hz (need 16000)");
  }
  if (wav.bits_per_sample != 16) {
    throw ParseError("unsupported sample width " + std::to_string(wav.bits_per_sample) +
                     " bits (need 16)");
  }
  if (wav.channels != static_cast<int>(layout.size())) {
    throw ParseError("channel count mismatch: file has " + std::to_string(wav.channels) +
                     ", layout assigns " + std::to_string(layout.size()));
  }
  if (frame_ms <= 0) throw ContractError("frame length must be positive");
  return std::make_unique<WavReplaySource>(std::move(wav), std::move(layout), frame_ms);
}

inline std::unique_ptr<FrameSource> open_wav_replay(const std::filesystem::path& path,
                                                    ChannelLayout layout,
                                                    Millis frame_ms = kDefaultFrameMs) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string(), 0);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  return open_wav_replay(parse_wav(bytes), std::move(layout), frame_ms);
}

// Mono ASR-channel source for simulation: a square wave of `amplitude`
// (fraction of full scale) inside each speech interval, silence elsewhere.
class SyntheticSpeechSource final : public FrameSource {
 public:
  struct Interval {
    Millis start_ms;
    Millis end_ms;
  };

  SyntheticSpeechSource(std::vector<Interval> speech, Millis duration_ms,
                        double amplitude = 0.25, Millis frame_ms = kDefaultFrameMs,
                        ChannelRole role = ChannelRole::Asr)
      : speech_(std::move(speech)),
        duration_ms_(duration_ms),
        amplitude_(amplitude),
        frame_ms_(frame_ms),
        layout_{{role}} {}

  const ChannelLayout& layout() const override { return layout_; }

  std::optional<AudioFrame> next() override {
    if (t_ >= duration_ms_) return std::nullopt;
    AudioFrame frame;
    frame.t_ms = t_;
    frame.channel = layout_.roles.front();
    frame.samples.resize(static_cast<std::size_t>(frame_ms_ * kSamplesPerMs));
    const auto level = static_cast<std::int16_t>(std::lround(amplitude_ * 32767.0));
    for (std::size_t i = 0; i < frame.samples.size(); ++i) {
      const Millis t = t_ + static_cast<Millis>(i) / kSamplesPerMs;
      if (in_speech(t)) frame.samples[i] = ((i / 8) % 2) ? level : static_cast<std::int16_t>(-level);
    }
    t_ += frame_ms_;
    return frame;
  }

 private:
  bool in_speech(Millis t) const {
    return std::any_of(speech_.begin(), speech_.end(),
                       [t](const Interval& iv) { return t >= iv.start_ms && t < iv.end_ms; });
  }

  std::vector<Interval> speech_;
  Millis duration_ms_;
  double amplitude_;
  Millis frame_ms_;
  ChannelLayout layout_;
  Millis t_ = 0;
};

// ─── VAD ─────────────────────────────────────────────────────────────────────

struct VadConfig {
  double rms_threshold = 0.02;  // fraction of full scale
  Millis hangover_ms = 300;
};

struct VadState {
  VadConfig config;
  bool active = false;
  std::optional<Millis> last_active_t_ms;
};

inline double frame_rms(const AudioFrame& frame) {
  if (frame.samples.empty()) return 0.0;
  double acc = 0.0;
  for (auto s : frame.samples) acc += double(s) * double(s);
  return std::sqrt(acc / double(frame.samples.size())) / 32768.0;
}

// Energy gate with hangover: a frame is active when its RMS reaches the
// threshold, or when it starts within hangover_ms of the last energetic frame.
inline std::pair<VadState, bool> vad_step(VadState state, const AudioFrame& frame) {
  if (frame.sample_rate_hz != kSampleRateHz) {
    throw ContractError("vad_step: frame sample rate must be 16000 Hz");
  }
  const bool energetic = frame_rms(frame) >= state.config.rms_threshold;
  bool active = energetic;
  if (energetic) {
    state.last_active_t_ms = frame.t_ms;
  } else if (state.last_active_t_ms &&
             frame.t_ms - *state.last_active_t_ms <= state.config.hangover_ms) {
    active = true;
  }
  state.active = active;
  return {state, active};
}

}  // namespace parley
