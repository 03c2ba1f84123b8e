#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bnpipe {

enum class ErrorCode {
  // tensor_core
  DuplicateIndex,
  IndexOutOfBounds,
  NonFiniteValue,
  EmptyTensor,
  // fitting
  NonFiniteLoss,
  ShapeMismatch,
  DeepHeadUnsupported,
  DegenerateScores,
  // data preparation
  RaggedSequences,
  DuplicateTrialId,
  NonBinaryTensor,
  TooFewEntries,
  CoordinateOutOfRange,
  EmptyCorpus,
  // metrics
  LengthMismatch,
  Empty,
  UnknownClass,
  TooFewPairs,
  DegenerateMarginals,
  // sequencing
  MissingPrediction,
  LabelerFailure,
  NonConsecutiveChunks,
  // plumbing
  IoError,
  ParseError,
  ConfigError,
  ManifestError,
};

std::string_view to_string(ErrorCode code);

/// Exit status class used by the command-line tool: 1 usage/config, 2 data, 3 runtime.
int exit_status(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace bnpipe
