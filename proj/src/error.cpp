#include "profmon/error.hpp"

namespace profmon {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid input";
    case ErrorKind::invalid_state: return "invalid state";
    case ErrorKind::no_solution: return "no solution";
    case ErrorKind::calibration_failed: return "calibration failed";
    case ErrorKind::io: return "i/o error";
    case ErrorKind::parse: return "parse error";
  }
  return "unknown";
}

}  // namespace profmon
