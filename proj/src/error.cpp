#include "bnpipe/error.hpp"

namespace bnpipe {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateIndex: return "DuplicateIndex";
    case ErrorCode::IndexOutOfBounds: return "IndexOutOfBounds";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::EmptyTensor: return "EmptyTensor";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DeepHeadUnsupported: return "DeepHeadUnsupported";
    case ErrorCode::DegenerateScores: return "DegenerateScores";
    case ErrorCode::RaggedSequences: return "RaggedSequences";
    case ErrorCode::DuplicateTrialId: return "DuplicateTrialId";
    case ErrorCode::NonBinaryTensor: return "NonBinaryTensor";
    case ErrorCode::TooFewEntries: return "TooFewEntries";
    case ErrorCode::CoordinateOutOfRange: return "CoordinateOutOfRange";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::TooFewPairs: return "TooFewPairs";
    case ErrorCode::DegenerateMarginals: return "DegenerateMarginals";
    case ErrorCode::MissingPrediction: return "MissingPrediction";
    case ErrorCode::LabelerFailure: return "LabelerFailure";
    case ErrorCode::NonConsecutiveChunks: return "NonConsecutiveChunks";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::ManifestError: return "ManifestError";
  }
  return "Unknown";
}

int exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
      return 1;
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::LabelerFailure:
      return 3;
    default:
      return 2;
  }
}

}  // namespace bnpipe
