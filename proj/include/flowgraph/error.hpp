#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flowgraph {

enum class ErrorCode {
  kSentinelTimestamp,
  kNonMonotonicTimestamp,
  kTypeMismatch,
  kBoundRegression,
  kDuplicateName,
  kNotRegistered,
  kInvalidOptions,
  kSyntaxError,
  kDuplicateKey,
  kMissingInterface,
  kRecursiveSubgraph,
  kMultipleProducers,
  kUnproducedInput,
  kContractViolation,
  kUnknownCalculator,
  kUnknownExecutor,
  kCycleDetected,
  kUnknownStream,
  kGraphTerminated,
  kCollidingInputs,
  kMissingSidePacket,
  kStartupError,
  kIoError,
  kMalformedTrace,
  kLineageBroken,
  kStalled,
  kInternal,
};

std::string_view ErrorCodeName(ErrorCode code);

/// Thrown by framework operations on contract violations and misuse.
/// Exceptions escaping a calculator lifecycle method terminate the
/// graph run with an error result.
class FlowError : public std::runtime_error {
 public:
  FlowError(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace flowgraph
