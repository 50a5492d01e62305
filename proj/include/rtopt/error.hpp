#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rtopt {

enum class ErrorCode {
  IndexOutOfRange,
  DimensionMismatch,
  ParseError,
  ValidationError,
  ConfigError,
  IoError,
  Overflow,
  DomainError,
  EvalError,
  TransportError,
  WorkerLost,
};

std::string_view to_string(ErrorCode code);

/// Base exception for everything the library throws on bad input or failed I/O.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// A term evaluation failed on some worker. worker_id is -1 for the serial path.
class EvalError : public Error {
 public:
  EvalError(int worker_id, std::size_t term_id, const std::string& message)
      : Error(ErrorCode::EvalError, "worker " + std::to_string(worker_id) + ", term " +
                                        std::to_string(term_id) + ": " + message),
        worker_id_(worker_id),
        term_id_(term_id),
        detail_(message) {}

  int worker_id() const noexcept { return worker_id_; }
  std::size_t term_id() const noexcept { return term_id_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  int worker_id_;
  std::size_t term_id_;
  std::string detail_;
};

class WorkerLost : public Error {
 public:
  WorkerLost(int worker_id, const std::string& message)
      : Error(ErrorCode::WorkerLost, "worker " + std::to_string(worker_id) + ": " + message),
        worker_id_(worker_id) {}

  int worker_id() const noexcept { return worker_id_; }

 private:
  int worker_id_;
};

}  // namespace rtopt
