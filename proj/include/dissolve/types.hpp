#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace dissolve {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Absolute tolerance used for "x in X" preconditions and membership tests.
inline constexpr double kDomainTol = 1e-8;

/// Raised for malformed arguments: dimension mismatches, bad parameters.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a point lies outside the set an operation is defined on.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when an operation needs a callback the caller did not supply.
class CapabilityError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when a computation cannot proceed numerically.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_dim(Index got, Index expected, const char* what) {
  if (got != expected) {
    throw InvalidInput(std::string(what) + ": expected dimension " + std::to_string(expected) +
                       ", got " + std::to_string(got));
  }
}

/// Warnings from library code go through here so the CLI can silence them.
void log_warning(const std::string& message);
void set_warnings_enabled(bool enabled);

}  // namespace dissolve
