#pragma once

#include <stdexcept>
#include <string>

namespace nnbpe {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument or configuration value violates a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Input data is malformed, inconsistent, or cannot be read/written.
class DataError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver stopped without meeting its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// A posterior vanished on every grid point (all mass on excluded points).
class DegeneratePosterior : public Error {
 public:
  using Error::Error;
};

/// A measurement sequence contains an outcome that the calibration data never observed.
class UnobservedOutcome : public Error {
 public:
  UnobservedOutcome(const std::string& what, double outcome)
      : Error(what), outcome_(outcome) {}
  double outcome() const noexcept { return outcome_; }

 private:
  double outcome_;
};

}  // namespace nnbpe
