#pragma once

#include <stdexcept>
#include <string>

namespace sccs {

// Invalid arguments or a spec/config that violates a documented invariant.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The requested quantity is undefined at these parameters (e.g. log(S/0)).
class DomainError : public InputError {
 public:
  using InputError::InputError;
};

// A numerical routine could not deliver its accuracy guarantee.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, double estimate = 0.0)
      : std::runtime_error(what), estimate_(estimate) {}

  // Error estimate or residual attached to the failure.
  double estimate() const noexcept { return estimate_; }

 private:
  double estimate_;
};

class ConvergenceError : public NumericError {
 public:
  ConvergenceError(const std::string& what, double residual, std::size_t iterations)
      : NumericError(what, residual), iterations_(iterations) {}

  std::size_t iterations() const noexcept { return iterations_; }

 private:
  std::size_t iterations_;
};

// No bistable window of the free entropy exists at the requested point.
class NoTransitionError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace sccs
