#pragma once

#include <stdexcept>
#include <string>

namespace subdiff {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition (positivity, sizes, ...) does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Incompatible array or network dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A special-function evaluation did not reach its tolerance.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Linear solver failure. Carries the last relative residual.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Cholesky factorization failed even after jitter escalation.
class FactorizationError : public Error {
 public:
  using Error::Error;
};

/// Training diverged. Carries the epoch where the loss stopped being finite.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class InversionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace subdiff
