#include "rtopt/error.hpp"

namespace rtopt {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::EvalError: return "EvalError";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::WorkerLost: return "WorkerLost";
  }
  return "Unknown";
}

}  // namespace rtopt
