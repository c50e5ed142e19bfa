#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lexiscope {

enum class ErrorCode {
  // tokenizer
  CorpusTooSmall,
  UnknownTokenId,
  WordTooShort,
  TooManyPieces,
  InvalidPosition,
  NoValidNonword,
  // model
  SequenceTooLong,
  BadIntervention,
  EmptyCorpus,
  NonFiniteLoss,
  // probes / linear algebra
  EmptyTrainSet,
  DimensionMismatch,
  ZeroVector,
  EmptyInput,
  // patchscope
  BadTemplate,
  BadTarget,
  // experiments
  UnbalancedDataset,
  NoEligibleWords,
  DegenerateSample,
  // vocabulary expansion
  NoCandidates,
  // harness
  IoError,
  EncodingError,
  ConfigError,
  FormatError,
  Internal,
};

std::string_view to_string(ErrorCode code);

/// Process exit status for an error: 2 config, 3 data, 4 internal.
int exit_status(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace lexiscope
