#include "hedge/error.hpp"

namespace hedge {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::BudgetMismatch: return "BudgetMismatch";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::PositiveLogLikelihood: return "PositiveLogLikelihood";
    case ErrorCode::InvalidValue: return "InvalidValue";
    case ErrorCode::InvalidPath: return "InvalidPath";
    case ErrorCode::BudgetTooSmall: return "BudgetTooSmall";
    case ErrorCode::NotEnoughFrames: return "NotEnoughFrames";
    case ErrorCode::EmptyQuestion: return "EmptyQuestion";
    case ErrorCode::EmptyTokenList: return "EmptyTokenList";
    case ErrorCode::EndpointError: return "EndpointError";
    case ErrorCode::LogprobsUnavailable: return "LogprobsUnavailable";
    case ErrorCode::PerturbationFailure: return "PerturbationFailure";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ProviderError: return "ProviderError";
    case ErrorCode::IncompleteJudgmentFile: return "IncompleteJudgmentFile";
    case ErrorCode::IncompleteMatrix: return "IncompleteMatrix";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::UnknownCluster: return "UnknownCluster";
    case ErrorCode::UniverseMismatch: return "UniverseMismatch";
    case ErrorCode::MalformedVerdict: return "MalformedVerdict";
    case ErrorCode::InvalidScore: return "InvalidScore";
    case ErrorCode::PersistentMalformedVerdict: return "PersistentMalformedVerdict";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::MissingData: return "MissingData";
    case ErrorCode::UsageError: return "UsageError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace hedge
