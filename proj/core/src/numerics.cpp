#include "ame/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ame/error.hpp"

namespace ame {

bool Matrix::all_finite() const {
  return std::all_of(data.begin(), data.end(),
                     [](double v) { return std::isfinite(v); });
}

bool ProbVector::valid() const {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= 1e-9;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

ProbVector softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidArgument("softmax: temperature must be positive and finite");
  }
  if (logits.empty()) throw InvalidArgument("softmax: empty logits");
  for (double v : logits) {
    if (!std::isfinite(v)) throw InvalidArgument("softmax: non-finite logit");
  }

  double max_scaled = logits[0] / temperature;
  for (double v : logits) max_scaled = std::max(max_scaled, v / temperature);

  ProbVector out;
  out.probs.resize(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.probs[i] = std::exp(logits[i] / temperature - max_scaled);
    sum += out.probs[i];
  }
  for (double& p : out.probs) p /= sum;
  return out;
}

double entropy(const ProbVector& p) {
  if (!p.valid()) throw InvalidArgument("entropy: input is not a probability vector");
  double h = 0.0;
  for (double pi : p.probs) {
    if (pi > 0.0) h -= pi * std::log(std::max(pi, kProbFloor));
  }
  return std::max(h, 0.0);
}

double kl_div(const ProbVector& p, const ProbVector& q) {
  if (p.size() != q.size()) throw InvalidArgument("kl_div: length mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      d += p[i] * (std::log(std::max(p[i], kProbFloor)) -
                   std::log(std::max(q[i], kProbFloor)));
    }
  }
  return std::max(d, 0.0);
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine_sim: length mismatch");
  double na = norm(a);
  double nb = norm(b);
  if (na <= 0.0 || nb <= 0.0) throw InvalidArgument("cosine_sim: zero-norm input");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h) {
  std::vector<double> grad(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    double fp = f(x);
    x[i] = xi - h;
    double fm = f(x);
    x[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericFailure(
          "finite_diff_grad: non-finite evaluation at component " + std::to_string(i), i);
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace ame
