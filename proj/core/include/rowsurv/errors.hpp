#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rowsurv {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input (dimension mismatch, bad range, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A covariate (or the treatment) has zero variance and cannot be standardized.
class ConstantColumn : public InvalidInput {
 public:
  /// `column` is the covariate index, or `kTreatment` for the treatment vector.
  explicit ConstantColumn(std::size_t column);

  static constexpr std::size_t kTreatment = static_cast<std::size_t>(-1);

  std::size_t column() const noexcept { return column_; }
  bool is_treatment() const noexcept { return column_ == kTreatment; }

 private:
  std::size_t column_;
};

/// One of the two treatment groups has no units (or no positive weight).
class EmptyGroup : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// No tolerance in an escalation grid produced an optimal weighting problem.
class AllInfeasible : public Error {
 public:
  using Error::Error;
};

/// Errors raised by the Cox partial-likelihood fitters.
class CoxError : public Error {
 public:
  using Error::Error;
};

/// The treatment is constant on the units carrying weight; the likelihood is flat.
class NonIdentifiable : public CoxError {
 public:
  using CoxError::CoxError;
};

/// The partial likelihood increases without bound (separation in the risk sets).
class MonotoneLikelihood : public CoxError {
 public:
  using CoxError::CoxError;
};

/// No event carries positive weight.
class NoEvents : public CoxError {
 public:
  using CoxError::CoxError;
};

/// Newton iterations ran out before the convergence criteria were met.
class NotConverged : public CoxError {
 public:
  using CoxError::CoxError;
};

/// Logistic propensity model diverges (complete or quasi-complete separation).
class Separation : public Error {
 public:
  using Error::Error;
};

/// Linear treatment model leaves no residual variance.
class ZeroResidualVariance : public Error {
 public:
  using Error::Error;
};

/// More than half of the bootstrap or simulation replicates failed.
class TooManyFailures : public Error {
 public:
  using Error::Error;
};

}  // namespace rowsurv
