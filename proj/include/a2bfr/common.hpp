#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace a2bfr {

// All numeric work runs in double; image files are 8-bit at the I/O boundary.
using Scalar = double;

enum class ErrKind { validation, runtime };

class Error : public std::runtime_error {
 public:
  Error(ErrKind kind, std::string msg) : std::runtime_error(std::move(msg)), kind_(kind) {}
  ErrKind kind() const { return kind_; }

 private:
  ErrKind kind_;
};

[[noreturn]] inline void fail_validation(const std::string& msg) {
  throw Error(ErrKind::validation, msg);
}

[[noreturn]] inline void fail_runtime(const std::string& msg) {
  throw Error(ErrKind::runtime, msg);
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail_validation(msg);
}

inline void require_runtime(bool cond, const std::string& msg) {
  if (!cond) fail_runtime(msg);
}

inline Scalar clamp01(Scalar v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace a2bfr
