#pragma once

#include <stdexcept>
#include <string>

namespace tvflcm {

/// Bad input: malformed data, inconsistent dimensions, out-of-domain points.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical failure: non-convergence, singular systems, non-finite criteria.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

[[noreturn]] inline void fail_validation(const std::string& what) { throw ValidationError(what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) fail_validation(what);
}

}  // namespace detail
}  // namespace tvflcm
