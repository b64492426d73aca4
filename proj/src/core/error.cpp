#include "pft/error.hpp"

namespace pft {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch:
      return "DimensionMismatch";
    case ErrorKind::DegenerateVector:
      return "DegenerateVector";
    case ErrorKind::DegenerateRanking:
      return "DegenerateRanking";
    case ErrorKind::InvalidValue:
      return "InvalidValue";
    case ErrorKind::EmptyInput:
      return "EmptyInput";
    case ErrorKind::FormatError:
      return "FormatError";
    case ErrorKind::CorruptFile:
      return "CorruptFile";
    case ErrorKind::UnsupportedDtype:
      return "UnsupportedDtype";
    case ErrorKind::IoError:
      return "IoError";
    case ErrorKind::UnknownArchitecture:
      return "UnknownArchitecture";
    case ErrorKind::UnmappedTensor:
      return "UnmappedTensor";
    case ErrorKind::IncompatibleCheckpoints:
      return "IncompatibleCheckpoints";
    case ErrorKind::IncompatibleReports:
      return "IncompatibleReports";
    case ErrorKind::NoGuidelines:
      return "NoGuidelines";
    case ErrorKind::InvalidPolicy:
      return "InvalidPolicy";
    case ErrorKind::IncompatiblePlan:
      return "IncompatiblePlan";
    case ErrorKind::DivergenceError:
      return "DivergenceError";
    case ErrorKind::EvaluationError:
      return "EvaluationError";
  }
  return "Unknown";
}

bool is_numerical(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateVector:
    case ErrorKind::DegenerateRanking:
    case ErrorKind::InvalidValue:
    case ErrorKind::DivergenceError:
      return true;
    default:
      return false;
  }
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), message_(message) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace pft
