#ifndef MENTOR_ERROR_HPP_
#define MENTOR_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace mentor {

enum class ErrorCode {
  // configuration
  UnknownKey,
  TypeError,
  RangeError,
  // data
  MissingFile,
  MalformedLine,
  EmptyCore,
  BadMagic,
  DimensionMismatch,
  MissingItemRow,
  NonFiniteValue,
  IsolatedNode,
  ZeroVector,
  KTooLarge,
  EmptyMatrix,
  ZeroRow,
  IndexOutOfRange,
  NoNegativesAvailable,
  MissingPrerequisite,
  Io,
  // numerics
  NonFiniteLoss,
  NonFiniteUpdate,
  Diverged,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Process exit code for an error: 2 config, 3 data, 4 numerical divergence.
int exit_code_for(ErrorCode code);

}  // namespace mentor

#endif  // MENTOR_ERROR_HPP_
