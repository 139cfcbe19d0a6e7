#pragma once

#include <stdexcept>
#include <string>

namespace mumimo {

/// Shapes of the arguments do not fit together.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A channel covariance is not Hermitian positive semidefinite.
class CovarianceError : public std::invalid_argument {
 public:
  CovarianceError(int user, const std::string& what)
      : std::invalid_argument("covariance of user " + std::to_string(user) + ": " + what),
        user_(user) {}

  int user() const noexcept { return user_; }

 private:
  int user_;
};

/// A matrix that must be inverted is singular (or not positive definite).
class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values showed up during optimisation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration could not be parsed or failed validation.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mumimo
