#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace parley {

// A caller broke a documented precondition (ordering, sequence numbers, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed input text (JSON, CSV, WAV headers).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what, std::size_t offset = 0)
      : std::runtime_error(what), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// A remote or mock service failed. `stage` names the pipeline stage
// ("asr", "llm", "tts", ...).
class ServiceError : public std::runtime_error {
 public:
  ServiceError(std::string stage, const std::string& cause, bool retryable = false)
      : std::runtime_error(stage + ": " + cause),
        stage_(std::move(stage)),
        cause_(cause),
        retryable_(retryable) {}

  const std::string& stage() const noexcept { return stage_; }
  const std::string& cause() const noexcept { return cause_; }
  bool retryable() const noexcept { return retryable_; }

 private:
  std::string stage_;
  std::string cause_;
  bool retryable_;
};

class TransportError : public ServiceError {
 public:
  TransportError(std::string stage, const std::string& cause)
      : ServiceError(std::move(stage), cause, /*retryable=*/true) {}
};

class SessionClosedError : public std::logic_error {
 public:
  SessionClosedError() : std::logic_error("session closed") {}
};

class IoError : public std::runtime_error {
 public:
  IoError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace parley
