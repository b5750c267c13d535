#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace cain {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown by the trainer when a loss stops being finite.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& msg) : Error(msg) {}
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

// When enabled, every operation validates that its output is finite and
// throws on NaN/Inf. Off by default; tests turn it on. The trainer checks
// loss finiteness each step regardless of this flag.
inline bool& finite_checks() {
  static bool on = false;
  return on;
}

inline void set_finite_checks(bool on) { finite_checks() = on; }

}  // namespace cain
