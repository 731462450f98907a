#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mifruit {

enum class ErrorKind {
  invalid_argument,
  invalid_state,
  numeric_failure,
  format_error,
  io_error,
  data_invalid,
  degenerate_image,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::invalid_state: return "invalid-state";
    case ErrorKind::numeric_failure: return "numeric-failure";
    case ErrorKind::format_error: return "format-error";
    case ErrorKind::io_error: return "io-error";
    case ErrorKind::data_invalid: return "data-invalid";
    case ErrorKind::degenerate_image: return "degenerate-image";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the kinds above so the
/// CLI can map it onto an exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::invalid_argument, what);
}

}  // namespace mifruit
