#pragma once

#include <stdexcept>
#include <string>

namespace lsgpr {

// Bad input: malformed files, inconsistent dimensions, out-of-range settings.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// Numerical breakdown: failed factorization, non-finite objective.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lsgpr
