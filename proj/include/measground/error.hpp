#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace measground {

enum class ErrorKind {
  InvalidArgument,
  MissingFile,
  MalformedSidecar,
  DimensionMismatch,
  IoFailure,
  InvalidSpec,
  DegenerateCalibration,
  DomainError,
  EmptyBracket,
  SingularMatrix,
  ShapeMismatch,
  AnnotatorUnavailable,
  MalformedResponse,
  EmptyInput,
  MissingMeasXyz,
  SchemaViolation,
  DegenerateSplit,
  ManifestMismatch,
  JudgeUnavailable,
  MalformedVerdict,
  NonFiniteGradient,
  UnknownSubcommand,
  ConfigInvalid,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries one of the kinds above so
/// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Remote and filesystem failures; everything else is a validation failure.
  bool is_io() const noexcept {
    return kind_ == ErrorKind::IoFailure || kind_ == ErrorKind::MissingFile ||
           kind_ == ErrorKind::AnnotatorUnavailable || kind_ == ErrorKind::JudgeUnavailable;
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace measground
