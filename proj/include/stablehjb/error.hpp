#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stablehjb {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class UnsupportedScheduleError : public Error {
 public:
  using Error::Error;
};

/// A Monte Carlo integrand returned a non-finite value.
class PoisonedEstimateError : public Error {
 public:
  PoisonedEstimateError(std::size_t sample_index, const std::string& what)
      : Error(what + " (sample " + std::to_string(sample_index) + ")"),
        sample_index_(sample_index) {}
  std::size_t sample_index() const noexcept { return sample_index_; }

 private:
  std::size_t sample_index_;
};

class MissingDerivativeError : public Error {
 public:
  using Error::Error;
};

class InconclusiveResultError : public Error {
 public:
  using Error::Error;
};

class QuadratureError : public Error {
 public:
  QuadratureError(double achieved_error, const std::string& what)
      : Error(what + " (achieved error estimate " + std::to_string(achieved_error) + ")"),
        achieved_error_(achieved_error) {}
  double achieved_error() const noexcept { return achieved_error_; }

 private:
  double achieved_error_;
};

/// Picard iteration on a state path did not reach its tolerance.
class NonContractionError : public Error {
 public:
  NonContractionError(double lipschitz_times_length, const std::string& what)
      : Error(what), lipschitz_times_length_(lipschitz_times_length) {}
  /// [F]_Lip times the block length, the analytic contraction bound.
  double lipschitz_times_length() const noexcept { return lipschitz_times_length_; }

 private:
  double lipschitz_times_length_;
};

class AdmissibilityError : public Error {
 public:
  using Error::Error;
};

/// HJB fixed-point residuals stopped decreasing.
class DivergenceError : public Error {
 public:
  DivergenceError(double empirical_factor, double analytic_factor, const std::string& what)
      : Error(what), empirical_factor_(empirical_factor), analytic_factor_(analytic_factor) {}
  double empirical_factor() const noexcept { return empirical_factor_; }
  double analytic_factor() const noexcept { return analytic_factor_; }

 private:
  double empirical_factor_;
  double analytic_factor_;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A path failed inside a batch; carries the offending path index.
class PathError : public Error {
 public:
  PathError(std::size_t path_index, const std::string& what)
      : Error("path " + std::to_string(path_index) + ": " + what), path_index_(path_index) {}
  std::size_t path_index() const noexcept { return path_index_; }

 private:
  std::size_t path_index_;
};

}  // namespace stablehjb
