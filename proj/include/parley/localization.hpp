#pragma once

#include <cmath>
#include <functional>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include <netdb.h>
#include <sys/socket.h>
#include <unistd.h>

#include "parley/core.hpp"
#include "parley/error.hpp"

namespace parley {

// Tracked-source feed: one JSON object per line,
//   {"timeStamp": <ms>, "src": [{"id": n, "x": .., "y": .., "z": .., "activity": a}, ...]}
// Slots with id 0 are inactive and dropped. Directions are normalized.
inline std::vector<SourceEvent> parse_localization_event(std::string_view line) {
  Json doc;
  try {
    doc = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("localization event: ") + e.what(), e.byte);
  }
  if (!doc.is_object()) throw ParseError("localization event: expected a JSON object", 0);

  auto field = [](const Json& obj, const char* name, const std::string& where) -> const Json& {
    auto it = obj.find(name);
    if (it == obj.end()) throw ParseError(where + ": missing field '" + name + "'");
    if (!it->is_number()) throw ParseError(where + ": field '" + name + "' is not a number");
    return *it;
  };

  const auto t_ms = field(doc, "timeStamp", "localization event").get<Millis>();
  auto src = doc.find("src");
  if (src == doc.end()) throw ParseError("localization event: missing field 'src'");
  if (!src->is_array()) throw ParseError("localization event: field 'src' is not an array");

  std::vector<SourceEvent> out;
  for (std::size_t i = 0; i < src->size(); ++i) {
    const Json& s = (*src)[i];
    const std::string where = "src[" + std::to_string(i) + "]";
    if (!s.is_object()) throw ParseError(where + ": expected an object");
    const int id = field(s, "id", where).get<int>();
    const double x = field(s, "x", where).get<double>();
    const double y = field(s, "y", where).get<double>();
    const double z = field(s, "z", where).get<double>();
    const double activity = field(s, "activity", where).get<double>();
    if (id == 0) continue;
    const double norm = std::sqrt(x * x + y * y + z * z);
    if (!(norm > 0.0)) throw ParseError(where + ": zero-length direction");
    if (activity < 0.0 || activity > 1.0) throw ParseError(where + ": activity outside [0,1]");
    out.push_back({t_ms, id, {x / norm, y / norm, z / norm}, activity});
  }
  return out;
}

inline std::string serialize_localization_event(Millis t_ms, const std::vector<SourceEvent>& events) {
  Json src = Json::array();
  for (const auto& e : events) {
    src.push_back({{"id", e.source_id},
                   {"x", e.direction[0]},
                   {"y", e.direction[1]},
                   {"z", e.direction[2]},
                   {"activity", e.activity}});
  }
  return Json{{"timeStamp", t_ms}, {"src", src}}.dump();
}

// Reads newline-delimited events until EOF. Blank lines are skipped; a bad
// line aborts with its 1-based line number.
inline void read_localization_stream(std::istream& in,
                                     const std::function<void(std::vector<SourceEvent>)>& on_event) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      on_event(parse_localization_event(line));
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what(), e.offset());
    }
  }
}

// Line reader over a TCP connection to a localization server.
class TcpLineReader {
 public:
  TcpLineReader(const std::string& host, int port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
      throw TransportError("localization", "cannot resolve " + host);
    }
    for (addrinfo* p = res; p; p = p->ai_next) {
      fd_ = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
      if (fd_ < 0) continue;
      if (::connect(fd_, p->ai_addr, p->ai_addrlen) == 0) break;
      ::close(fd_);
      fd_ = -1;
    }
    ::freeaddrinfo(res);
    if (fd_ < 0) {
      throw TransportError("localization", "cannot connect to " + host + ":" + std::to_string(port));
    }
  }

  TcpLineReader(const TcpLineReader&) = delete;
  TcpLineReader& operator=(const TcpLineReader&) = delete;
  ~TcpLineReader() {
    if (fd_ >= 0) ::close(fd_);
  }

  // Next line without its terminator; false once the peer closes and the
  // buffer is drained.
  bool next_line(std::string& line) {
    for (;;) {
      if (auto nl = buf_.find('\n'); nl != std::string::npos) {
        line = buf_.substr(0, nl);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        buf_.erase(0, nl + 1);
        return true;
      }
      char chunk[4096];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n <= 0) {
        if (buf_.empty()) return false;
        line = std::move(buf_);
        buf_.clear();
        return true;
      }
      buf_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_ = -1;
  std::string buf_;
};

}  // namespace parley
