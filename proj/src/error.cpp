#include "lexiscope/error.hpp"

namespace lexiscope {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::CorpusTooSmall: return "CorpusTooSmall";
    case ErrorCode::UnknownTokenId: return "UnknownTokenId";
    case ErrorCode::WordTooShort: return "WordTooShort";
    case ErrorCode::TooManyPieces: return "TooManyPieces";
    case ErrorCode::InvalidPosition: return "InvalidPosition";
    case ErrorCode::NoValidNonword: return "NoValidNonword";
    case ErrorCode::SequenceTooLong: return "SequenceTooLong";
    case ErrorCode::BadIntervention: return "BadIntervention";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptyTrainSet: return "EmptyTrainSet";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::BadTemplate: return "BadTemplate";
    case ErrorCode::BadTarget: return "BadTarget";
    case ErrorCode::UnbalancedDataset: return "UnbalancedDataset";
    case ErrorCode::NoEligibleWords: return "NoEligibleWords";
    case ErrorCode::DegenerateSample: return "DegenerateSample";
    case ErrorCode::NoCandidates: return "NoCandidates";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::EncodingError: return "EncodingError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

int exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::BadTemplate:
      return 2;
    case ErrorCode::CorpusTooSmall:
    case ErrorCode::EmptyCorpus:
    case ErrorCode::IoError:
    case ErrorCode::EncodingError:
    case ErrorCode::FormatError:
    case ErrorCode::NoEligibleWords:
    case ErrorCode::NoCandidates:
    case ErrorCode::UnbalancedDataset:
    case ErrorCode::UnknownTokenId:
    case ErrorCode::SequenceTooLong:
      return 3;
    default:
      return 4;
  }
}

}  // namespace lexiscope
