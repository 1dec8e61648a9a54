#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace ame {

/// Probabilities are clamped at this floor before any logarithm.
inline constexpr double kProbFloor = 1e-12;

/// Dense row-major matrix of doubles. Every embedding table, logit block and
/// manifold in this library is one of these; no views, no striding.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  bool all_finite() const;

  bool operator==(const Matrix& other) const = default;
};

/// Discrete probability vector: entries nonnegative, summing to 1 within 1e-9.
struct ProbVector {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }

  bool valid() const;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

/// Temperature softmax sigma(logits / temperature), stabilized by max
/// subtraction. Throws InvalidArgument on non-finite input or temperature <= 0.
ProbVector softmax(std::span<const double> logits, double temperature);

/// Shannon entropy -sum p ln p in nats, with 0 ln 0 = 0.
/// Result lies in [0, ln(len(p))].
double entropy(const ProbVector& p);

/// KL divergence sum p ln(p/q) in nats; q is floored at kProbFloor.
/// Exactly 0 when p equals q element-wise. Throws on length mismatch.
double kl_div(const ProbVector& p, const ProbVector& q);

/// Cosine similarity clamped into [-1, 1]. Throws on zero-norm input or
/// length mismatch.
double cosine_sim(std::span<const double> a, std::span<const double> b);

/// Central-difference gradient oracle: component i is
/// (f(x + h e_i) - f(x - h e_i)) / (2h). Used to validate every analytic
/// gradient in the repository. Throws NumericFailure naming the component if
/// an evaluation is non-finite.
std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h = 1e-5);

}  // namespace ame
