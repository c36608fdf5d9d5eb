#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace must {

enum class ErrorCode {
  invalid_argument,
  dimension_mismatch,
  parse,
  io,
  state,
  internal,
};

/// All recoverable failures surface as Error values; nothing in the core aborts.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

template <class... Parts>
[[noreturn]] void fail(ErrorCode code, const Parts&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  throw Error(code, os.str());
}

}  // namespace must
