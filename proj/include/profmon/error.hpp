#pragma once

#include <stdexcept>
#include <string>

namespace profmon {

enum class ErrorKind {
  invalid_input,
  invalid_state,
  no_solution,
  calibration_failed,
  io,
  parse,
};

const char* to_string(ErrorKind kind) noexcept;

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

inline void require(bool condition, ErrorKind kind, const char* what) {
  if (!condition) throw Error(kind, what);
}

}  // namespace profmon
