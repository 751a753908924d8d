#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hedge {

enum class ErrorCode {
  // datamodel
  MissingField,
  BudgetMismatch,
  EmptyText,
  PositiveLogLikelihood,
  InvalidValue,
  // perturbation
  InvalidPath,
  BudgetTooSmall,
  NotEnoughFrames,
  // sampling
  EmptyQuestion,
  EmptyTokenList,
  EndpointError,
  LogprobsUnavailable,
  PerturbationFailure,
  // clustering
  DimensionMismatch,
  ProviderError,
  IncompleteJudgmentFile,
  IncompleteMatrix,
  ZeroVector,
  // metrics
  EmptyInput,
  UnknownCluster,
  UniverseMismatch,
  // adjudicator
  MalformedVerdict,
  InvalidScore,
  PersistentMalformedVerdict,
  // evaluation
  SingleClass,
  LengthMismatch,
  MissingData,
  // cli
  UsageError,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so the
/// CLI can report a structured, machine-readable error.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hedge
