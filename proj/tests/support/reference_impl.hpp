#pragma once

// Straight-line re-derivation of the scoring and loss chain, used as an
// independent oracle against the library path. Plain loops, no shared
// helpers, no softmax stabilization; valid for the moderate logits the tests
// feed it.

#include <cmath>
#include <cstddef>
#include <vector>

#include "ame/numerics.hpp"
#include "ame/rsm.hpp"

namespace ref {

inline std::vector<double> naive_softmax(const std::vector<double>& z, double tau) {
  std::vector<double> e(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    e[i] = std::exp(z[i] / tau);
    sum += e[i];
  }
  for (double& v : e) v /= sum;
  return e;
}

inline std::vector<double> naive_cosine_row(const ame::Matrix& images, std::size_t j,
                                            const ame::Matrix& texts, double temp) {
  std::vector<double> out(texts.rows);
  for (std::size_t i = 0; i < texts.rows; ++i) {
    double d = 0.0;
    double nv = 0.0;
    double nt = 0.0;
    for (std::size_t u = 0; u < images.cols; ++u) {
      d += images.at(j, u) * texts.at(i, u);
      nv += images.at(j, u) * images.at(j, u);
      nt += texts.at(i, u) * texts.at(i, u);
    }
    out[i] = d / (std::sqrt(nv) * std::sqrt(nt)) / temp;
  }
  return out;
}

inline double naive_kd(const ame::Matrix& images, const ame::Matrix& teacher_texts,
                       double teacher_temp, const ame::Matrix& student_texts,
                       double student_temp, double tau) {
  double acc = 0.0;
  for (std::size_t j = 0; j < images.rows; ++j) {
    auto p = naive_softmax(naive_cosine_row(images, j, teacher_texts, teacher_temp), tau);
    auto q = naive_softmax(naive_cosine_row(images, j, student_texts, student_temp), tau);
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] * std::log(p[i] / q[i]);
    acc += tau * tau * kl;
  }
  return acc / static_cast<double>(images.rows);
}

inline double naive_activate(ame::Activation act, double x) {
  return act == ame::Activation::kTanh ? std::tanh(x) : x;
}

// Manifold entropy recomputed from scratch: conv + linear paths, fractional
// averaging built by looping source cells instead of target bins.
inline double naive_manifold_entropy(const ame::ProjectionPair& params,
                                     const ame::Matrix& texts,
                                     const ame::Matrix& images) {
  const std::size_t d = params.mlp_weights.rows;
  const std::size_t r = params.manifold_dim;
  const std::size_t k = params.conv_kernel.size();
  const long half = static_cast<long>(k / 2);

  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < texts.rows; ++i) {
    std::vector<double> row(r);
    for (std::size_t c = 0; c < r; ++c) {
      double acc = params.mlp_bias[c];
      for (std::size_t u = 0; u < d; ++u) acc += texts.at(i, u) * params.mlp_weights.at(u, c);
      row[c] = naive_activate(params.activation, acc);
    }
    rows.push_back(row);
  }
  for (std::size_t j = 0; j < images.rows; ++j) {
    std::vector<double> conv(d);
    for (std::size_t u = 0; u < d; ++u) {
      double acc = params.conv_bias;
      for (std::size_t m = 0; m < k; ++m) {
        long src = static_cast<long>(u) + static_cast<long>(m) - half;
        src = ((src % static_cast<long>(d)) + static_cast<long>(d)) % static_cast<long>(d);
        acc += params.conv_kernel[m] * images.at(j, static_cast<std::size_t>(src));
      }
      conv[u] = naive_activate(params.activation, acc);
    }
    // Resample by scattering each source cell into the target bins it overlaps.
    std::vector<double> row(r, 0.0);
    const double step = static_cast<double>(d) / static_cast<double>(r);
    for (std::size_t u = 0; u < d; ++u) {
      for (std::size_t c = 0; c < r; ++c) {
        const double lo = step * static_cast<double>(c);
        const double hi = lo + step;
        double overlap = std::min(hi, static_cast<double>(u) + 1.0) -
                         std::max(lo, static_cast<double>(u));
        if (overlap > 0.0) row[c] += conv[u] * overlap / step;
      }
    }
    rows.push_back(row);
  }

  std::vector<double> scores(rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    double s = 0.0;
    for (double v : rows[t]) s += v;
    scores[t] = s / static_cast<double>(r);
  }
  std::vector<double> p = naive_softmax(scores, 1.0);
  double h = 0.0;
  for (double v : p) h -= v * std::log(v);
  return h;
}

inline double naive_total(const ame::Matrix& images, const ame::Matrix& teacher_texts,
                          double teacher_temp, const ame::Matrix& student_texts,
                          double student_temp, double tau,
                          const ame::ProjectionPair& params, double kd_weight,
                          double omega) {
  return kd_weight * naive_kd(images, teacher_texts, teacher_temp, student_texts,
                              student_temp, tau) +
         omega * naive_manifold_entropy(params, student_texts, images);
}

}  // namespace ref
