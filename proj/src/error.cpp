#include "measground/error.hpp"

namespace measground {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::MalformedSidecar: return "MalformedSidecar";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::DegenerateCalibration: return "DegenerateCalibration";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::EmptyBracket: return "EmptyBracket";
    case ErrorKind::SingularMatrix: return "SingularMatrix";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::AnnotatorUnavailable: return "AnnotatorUnavailable";
    case ErrorKind::MalformedResponse: return "MalformedResponse";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::MissingMeasXyz: return "MissingMeasXyz";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::DegenerateSplit: return "DegenerateSplit";
    case ErrorKind::ManifestMismatch: return "ManifestMismatch";
    case ErrorKind::JudgeUnavailable: return "JudgeUnavailable";
    case ErrorKind::MalformedVerdict: return "MalformedVerdict";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::UnknownSubcommand: return "UnknownSubcommand";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
  }
  return "Unknown";
}

}  // namespace measground
