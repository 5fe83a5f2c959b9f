#pragma once

#include <stdexcept>
#include <string>

namespace modeshape {

/// Bad input: malformed documents, violated invariants, unknown fields.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// Any failure of the numerics themselves. The CLI maps these to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Too few basis elements (or null-space directions) for the requested
/// constraints. Carries the smallest pulse length that would work.
class SizingError : public NumericalError {
 public:
  SizingError(const std::string& what, double min_tau_s)
      : NumericalError(what), min_tau_s_(min_tau_s) {}
  double min_tau() const noexcept { return min_tau_s_; }

 private:
  double min_tau_s_;
};

class InfeasibleError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Adaptive routine did not meet its tolerance; `achieved` is the best estimate reached.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, double achieved)
      : NumericalError(what), achieved_(achieved) {}
  double achieved() const noexcept { return achieved_; }

 private:
  double achieved_;
};

class CutoffError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace modeshape
