#include "mentor/error.hpp"

namespace mentor {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::TypeError: return "TypeError";
    case ErrorCode::RangeError: return "RangeError";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::EmptyCore: return "EmptyCore";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MissingItemRow: return "MissingItemRow";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::IsolatedNode: return "IsolatedNode";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::ZeroRow: return "ZeroRow";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::NoNegativesAvailable: return "NoNegativesAvailable";
    case ErrorCode::MissingPrerequisite: return "MissingPrerequisite";
    case ErrorCode::Io: return "Io";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NonFiniteUpdate: return "NonFiniteUpdate";
    case ErrorCode::Diverged: return "Diverged";
  }
  return "Unknown";
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownKey:
    case ErrorCode::TypeError:
    case ErrorCode::RangeError:
      return 2;
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::NonFiniteUpdate:
    case ErrorCode::Diverged:
      return 4;
    default:
      return 3;
  }
}

}  // namespace mentor
