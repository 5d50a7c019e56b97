#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace lhcalib {

enum class ErrorKind {
  validation,
  io,
  range,
  empty_capture,
  insufficient_data,
  underdetermined,
  behind_station,
  degenerate,
  path_quality,
  alignment,
  coverage,
  invalid_start,
  stage,
};

const char* to_string(ErrorKind kind);

/// Base exception for every failure raised by the library. The kind drives
/// the CLI exit code mapping.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Pipeline failure wrapping the error of a single stage.
class StageError : public Error {
 public:
  StageError(std::string stage, ErrorKind cause, const std::string& message)
      : Error(ErrorKind::stage, stage + ": " + message),
        stage_(std::move(stage)),
        cause_(cause) {}

  const std::string& stage() const noexcept { return stage_; }
  ErrorKind cause() const noexcept { return cause_; }

 private:
  std::string stage_;
  ErrorKind cause_;
};

/// Free-form messages plus named counters collected along a computation.
struct Diagnostics {
  std::vector<std::string> messages;
  std::map<std::string, long> counters;

  void note(std::string message) { messages.push_back(std::move(message)); }
  void count(const std::string& key, long n = 1) { counters[key] += n; }
  long counter(const std::string& key) const {
    auto it = counters.find(key);
    return it == counters.end() ? 0 : it->second;
  }
  void merge(const Diagnostics& other, const std::string& prefix = {});
};

}  // namespace lhcalib
