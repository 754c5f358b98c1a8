#ifndef LQSADP_ERRORS_HPP
#define LQSADP_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lqsadp {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid user-supplied configuration (bad values, violated PD/PSD, parse errors).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A gain fails the mean-square stability test, or the policy-evaluation
/// system it induces is (numerically) singular.
class NonStabilizingGain : public Error {
 public:
  NonStabilizingGain(const std::string& what, std::size_t iteration = 0,
                     double abscissa = 0.0)
      : Error(what), iteration_(iteration), abscissa_(abscissa) {}

  std::size_t iteration() const noexcept { return iteration_; }
  double abscissa() const noexcept { return abscissa_; }

 private:
  std::size_t iteration_;
  double abscissa_;
};

/// R + H is not positive definite, so the gain update is undefined.
class IndefiniteCurvature : public Error {
 public:
  using Error::Error;
};

/// Eigen-solver failure, non-finite solutions and similar.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A simulated sample path left any reasonable bound.
class InstabilityError : public Error {
 public:
  InstabilityError(const std::string& what, std::size_t path, double time)
      : Error(what), path_(path), time_(time) {}

  std::size_t path() const noexcept { return path_; }
  double time() const noexcept { return time_; }

 private:
  std::size_t path_;
  double time_;
};

/// The moment integrator lost positive semidefiniteness of E[x x^T].
class IntegrationAccuracyError : public Error {
 public:
  using Error::Error;
};

}  // namespace lqsadp

#endif  // LQSADP_ERRORS_HPP
