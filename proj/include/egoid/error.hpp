#pragma once

#include <stdexcept>
#include <string>

namespace egoid {

enum class ErrorCode {
  kInvalidArgument,
  kIo,
  kValidation,
  kFormat,
  kVersionMismatch,
  kShapeMismatch,
};

// All library failures are reported with this exception; the code lets the
// CLI map failures onto its exit-code table.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace egoid
