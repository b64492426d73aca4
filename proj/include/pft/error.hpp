#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pft {

enum class ErrorKind {
  DimensionMismatch,
  DegenerateVector,
  DegenerateRanking,
  InvalidValue,
  EmptyInput,
  FormatError,
  CorruptFile,
  UnsupportedDtype,
  IoError,
  UnknownArchitecture,
  UnmappedTensor,
  IncompatibleCheckpoints,
  IncompatibleReports,
  NoGuidelines,
  InvalidPolicy,
  IncompatiblePlan,
  DivergenceError,
  EvaluationError,
};

std::string_view to_string(ErrorKind kind);

// Numerical failures (divergence, degenerate inputs) as opposed to bad data.
bool is_numerical(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  // The message without the kind prefix that what() carries.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace pft
