#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace qwell {

// Error taxonomy mirrors the CLI exit codes:
//   InputError -> 2, PreconditionError -> 3, NumericalError -> 4.

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Gram matrix of the requested exponential family is too close to singular
// for this horizon; enlarging T is the usual cure.
class IllConditionedError : public NumericalError {
 public:
  IllConditionedError(const std::string& what, double condition)
      : NumericalError(what), condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

// The family {f_n} u {f_jj} degenerates as eta -> 0 (f_jj collapse onto f_0).
class DegenerateFamilyError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// A requested target direction has zero coupling <mu phi_j, phi_k>.
class UnreachableDirectionError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

class NewtonError : public NumericalError {
 public:
  NewtonError(const std::string& what, std::vector<double> residual_history)
      : NumericalError(what), residuals_(std::move(residual_history)) {}
  const std::vector<double>& residual_history() const { return residuals_; }

 private:
  std::vector<double> residuals_;
};

}  // namespace qwell
