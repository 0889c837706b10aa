#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stagebeat {

enum class ErrorCode {
  kUnknownCharacter,
  kUnknownProp,
  kAlreadyHeld,
  kNotHeld,
  kHeldCharacterCannotMove,
  kOutOfRange,
  kPropAlreadyAttached,
  kInvalidArgument,
  kNonMonotonicTimestamp,
  kSchemaViolation,
  kBackendFailure,
  kMalformedBackendReply,
  kCharacterNotHeld,
  kEmptyUtterance,
  kBudgetTooSmall,
  kUnknownMarble,
  kPositionOutOfRange,
  kEmptyTimeline,
  kUnknownFixture,
  kUnknownSession,
  kWrongPhase,
  kOutOfOrder,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownCharacter: return "UnknownCharacter";
    case ErrorCode::kUnknownProp: return "UnknownProp";
    case ErrorCode::kAlreadyHeld: return "AlreadyHeld";
    case ErrorCode::kNotHeld: return "NotHeld";
    case ErrorCode::kHeldCharacterCannotMove: return "HeldCharacterCannotMove";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kPropAlreadyAttached: return "PropAlreadyAttached";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kNonMonotonicTimestamp: return "NonMonotonicTimestamp";
    case ErrorCode::kSchemaViolation: return "SchemaViolation";
    case ErrorCode::kBackendFailure: return "BackendFailure";
    case ErrorCode::kMalformedBackendReply: return "MalformedBackendReply";
    case ErrorCode::kCharacterNotHeld: return "CharacterNotHeld";
    case ErrorCode::kEmptyUtterance: return "EmptyUtterance";
    case ErrorCode::kBudgetTooSmall: return "BudgetTooSmall";
    case ErrorCode::kUnknownMarble: return "UnknownMarble";
    case ErrorCode::kPositionOutOfRange: return "PositionOutOfRange";
    case ErrorCode::kEmptyTimeline: return "EmptyTimeline";
    case ErrorCode::kUnknownFixture: return "UnknownFixture";
    case ErrorCode::kUnknownSession: return "UnknownSession";
    case ErrorCode::kWrongPhase: return "WrongPhase";
    case ErrorCode::kOutOfOrder: return "OutOfOrder";
  }
  return "Unknown";
}

/// Engine error. `detail()` carries the operation-specific payload: the
/// offending id, a JSON pointer for schema violations, the measured distance
/// for OutOfRange, and so on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace stagebeat
