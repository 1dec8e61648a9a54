#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ame {

/// Bad caller input: shape mismatch, out-of-domain value, malformed config.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numeric evaluation produced a non-finite value. `component` names the
/// parameter index being probed when the failure happened.
class NumericFailure : public std::runtime_error {
 public:
  NumericFailure(const std::string& what, std::size_t component)
      : std::runtime_error(what), component_(component) {}

  std::size_t component() const { return component_; }

 private:
  std::size_t component_ = 0;
};

/// Prototype construction could not satisfy the pairwise angle constraint
/// within the rejection-sampling budget.
class GeometryInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training hit a non-finite loss. Carries the step index and the loss
/// breakdown at the point of failure.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t step, double kd,
                  double entropy, double total)
      : std::runtime_error(what), step_(step), kd_(kd), entropy_(entropy), total_(total) {}

  std::size_t step() const { return step_; }
  double kd() const { return kd_; }
  double entropy() const { return entropy_; }
  double total() const { return total_; }

 private:
  std::size_t step_ = 0;
  double kd_ = 0.0;
  double entropy_ = 0.0;
  double total_ = 0.0;
};

}  // namespace ame
