#include "ame/rsm.hpp"

#include <cmath>
#include <string>

#include "ame/error.hpp"
#include "ame/rng.hpp"
#include "json.hpp"

namespace ame {

namespace {

double activate(Activation act, double x) {
  return act == Activation::kTanh ? std::tanh(x) : x;
}

// Derivative expressed through the pre-activation value.
double activate_grad(Activation act, double pre) {
  if (act == Activation::kIdentity) return 1.0;
  double t = std::tanh(pre);
  return 1.0 - t * t;
}

// Circular 1-D convolution of one row with an odd-width kernel, plus bias.
void conv_row(std::span<const double> x, std::span<const double> kernel,
              double bias, std::span<double> out) {
  const std::size_t d = x.size();
  const std::size_t k = kernel.size();
  const std::size_t half = k / 2;
  for (std::size_t u = 0; u < d; ++u) {
    double acc = bias;
    for (std::size_t m = 0; m < k; ++m) {
      // source index u + m - half, wrapped
      std::size_t src = (u + m + d - half) % d;
      acc += kernel[m] * x[src];
    }
    out[u] = acc;
  }
}

}  // namespace

ProjectionPair ProjectionPair::seeded(std::size_t embed_dim, std::size_t manifold_dim,
                                      std::size_t kernel_width, std::uint64_t seed,
                                      Activation act) {
  if (kernel_width % 2 == 0 || kernel_width == 0) {
    throw InvalidArgument("ProjectionPair: kernel width must be odd");
  }
  if (embed_dim == 0 || manifold_dim == 0) {
    throw InvalidArgument("ProjectionPair: dimensions must be positive");
  }
  Rng rng(mix_seed(seed, 0x70726f6aULL));  // "proj"
  ProjectionPair p;
  p.manifold_dim = manifold_dim;
  p.activation = act;

  // Xavier-style uniform bounds keep both paths at unit working scale, so
  // the entropy term sees a live manifold from the first step.
  const double kernel_bound =
      std::sqrt(6.0 / static_cast<double>(2 * kernel_width));
  p.conv_kernel.resize(kernel_width);
  for (double& v : p.conv_kernel) v = rng.uniform(-kernel_bound, kernel_bound);
  p.conv_bias = rng.uniform(-0.1, 0.1);

  const double mlp_bound =
      std::sqrt(6.0 / static_cast<double>(embed_dim + manifold_dim));
  p.mlp_weights = Matrix(embed_dim, manifold_dim);
  for (double& v : p.mlp_weights.data) v = rng.uniform(-mlp_bound, mlp_bound);
  p.mlp_bias.resize(manifold_dim);
  for (double& v : p.mlp_bias) v = rng.uniform(-0.1, 0.1);
  return p;
}

ProjectionPair ProjectionPair::identity(std::size_t embed_dim) {
  ProjectionPair p;
  p.conv_kernel = {0.0, 1.0, 0.0};
  p.conv_bias = 0.0;
  p.mlp_weights = Matrix(embed_dim, embed_dim);
  for (std::size_t i = 0; i < embed_dim; ++i) p.mlp_weights.at(i, i) = 1.0;
  p.mlp_bias.assign(embed_dim, 0.0);
  p.manifold_dim = embed_dim;
  p.activation = Activation::kIdentity;
  return p;
}

std::size_t ProjectionPair::param_count() const {
  return conv_kernel.size() + 1 + mlp_weights.data.size() + mlp_bias.size();
}

std::vector<double> ProjectionPair::flatten() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  flat.insert(flat.end(), conv_kernel.begin(), conv_kernel.end());
  flat.push_back(conv_bias);
  flat.insert(flat.end(), mlp_weights.data.begin(), mlp_weights.data.end());
  flat.insert(flat.end(), mlp_bias.begin(), mlp_bias.end());
  return flat;
}

void ProjectionPair::assign_from_flat(std::span<const double> flat) {
  if (flat.size() != param_count()) {
    throw InvalidArgument("ProjectionPair: flat size mismatch");
  }
  std::size_t off = 0;
  for (double& v : conv_kernel) v = flat[off++];
  conv_bias = flat[off++];
  for (double& v : mlp_weights.data) v = flat[off++];
  for (double& v : mlp_bias) v = flat[off++];
}

void ProjectionPair::validate() const {
  if (conv_kernel.empty() || conv_kernel.size() % 2 == 0) {
    throw InvalidArgument("ProjectionPair: kernel width must be odd");
  }
  if (mlp_weights.cols != manifold_dim || mlp_bias.size() != manifold_dim) {
    throw InvalidArgument("ProjectionPair: MLP output width must equal manifold_dim");
  }
  if (!mlp_weights.all_finite()) {
    throw InvalidArgument("ProjectionPair: non-finite MLP weights");
  }
  for (double v : conv_kernel) {
    if (!std::isfinite(v)) throw InvalidArgument("ProjectionPair: non-finite kernel");
  }
  if (!std::isfinite(conv_bias)) {
    throw InvalidArgument("ProjectionPair: non-finite conv bias");
  }
  for (double v : mlp_bias) {
    if (!std::isfinite(v)) throw InvalidArgument("ProjectionPair: non-finite MLP bias");
  }
}

Matrix make_resample_matrix(std::size_t d, std::size_t r) {
  if (d == 0 || r == 0) throw InvalidArgument("make_resample_matrix: zero dimension");
  Matrix a(r, d);
  if (d == r) {
    for (std::size_t i = 0; i < r; ++i) a.at(i, i) = 1.0;
    return a;
  }
  const double step = static_cast<double>(d) / static_cast<double>(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double lo = step * static_cast<double>(i);
    const double hi = lo + step;
    for (std::size_t u = 0; u < d; ++u) {
      const double cell_lo = static_cast<double>(u);
      const double overlap =
          std::min(hi, cell_lo + 1.0) - std::max(lo, cell_lo);
      if (overlap > 0.0) a.at(i, u) = overlap / step;
    }
  }
  return a;
}

std::pair<Matrix, Matrix> apply_projections(const ProjectionPair& params,
                                            const Matrix& texts,
                                            const Matrix& images) {
  params.validate();
  const std::size_t d = params.input_dim();
  const std::size_t r = params.manifold_dim;
  if (texts.cols != d) {
    throw InvalidArgument("apply_projections: text width does not match MLP input");
  }
  if (images.cols != d) {
    throw InvalidArgument("apply_projections: image width does not match conv input");
  }

  Matrix projected_texts(texts.rows, r);
  for (std::size_t i = 0; i < texts.rows; ++i) {
    auto x = texts.row(i);
    for (std::size_t c = 0; c < r; ++c) {
      double acc = params.mlp_bias[c];
      for (std::size_t u = 0; u < d; ++u) acc += x[u] * params.mlp_weights.at(u, c);
      projected_texts.at(i, c) = activate(params.activation, acc);
    }
  }

  const Matrix resample = make_resample_matrix(d, r);
  Matrix projected_images(images.rows, r);
  std::vector<double> conv_out(d);
  for (std::size_t j = 0; j < images.rows; ++j) {
    conv_row(images.row(j), params.conv_kernel, params.conv_bias, conv_out);
    for (double& v : conv_out) v = activate(params.activation, v);
    for (std::size_t c = 0; c < r; ++c) {
      double acc = 0.0;
      for (std::size_t u = 0; u < d; ++u) acc += resample.at(c, u) * conv_out[u];
      projected_images.at(j, c) = acc;
    }
  }
  return {std::move(projected_texts), std::move(projected_images)};
}

Manifold assemble_manifold(const Matrix& projected_texts,
                           const Matrix& projected_images) {
  if (projected_texts.cols != projected_images.cols) {
    throw InvalidArgument("assemble_manifold: column mismatch between modalities");
  }
  const std::size_t r = projected_texts.cols;
  Manifold out;
  out.text_rows = projected_texts.rows;
  out.m = Matrix(projected_texts.rows + projected_images.rows, r);
  for (std::size_t i = 0; i < projected_texts.rows; ++i) {
    for (std::size_t c = 0; c < r; ++c) out.m.at(i, c) = projected_texts.at(i, c);
  }
  for (std::size_t j = 0; j < projected_images.rows; ++j) {
    for (std::size_t c = 0; c < r; ++c) {
      out.m.at(projected_texts.rows + j, c) = projected_images.at(j, c);
    }
  }
  out.scores.resize(out.m.rows);
  for (std::size_t t = 0; t < out.m.rows; ++t) {
    double sum = 0.0;
    for (std::size_t c = 0; c < r; ++c) sum += out.m.at(t, c);
    out.scores[t] = sum / static_cast<double>(r);
  }
  out.probs = softmax(out.scores, 1.0);
  out.entropy_value = entropy(out.probs);
  return out;
}

ManifoldEntropyGrad manifold_entropy_grad(const Manifold& manifold) {
  const std::size_t n = manifold.scores.size();
  const std::size_t r = manifold.m.cols;
  ManifoldEntropyGrad g;
  g.d_scores.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double pj = manifold.probs[j];
    const double log_pj = std::log(std::max(pj, kProbFloor));
    g.d_scores[j] = -pj * (log_pj + manifold.entropy_value);
  }
  g.d_m = Matrix(n, r);
  for (std::size_t j = 0; j < n; ++j) {
    const double v = g.d_scores[j] / static_cast<double>(r);
    for (std::size_t c = 0; c < r; ++c) g.d_m.at(j, c) = v;
  }
  return g;
}

std::vector<double> ProjectionGrads::flatten_params() const {
  std::vector<double> flat;
  flat.reserve(d_conv_kernel.size() + 1 + d_mlp_weights.data.size() + d_mlp_bias.size());
  flat.insert(flat.end(), d_conv_kernel.begin(), d_conv_kernel.end());
  flat.push_back(d_conv_bias);
  flat.insert(flat.end(), d_mlp_weights.data.begin(), d_mlp_weights.data.end());
  flat.insert(flat.end(), d_mlp_bias.begin(), d_mlp_bias.end());
  return flat;
}

ProjectionGrads project_backward(const ProjectionPair& params,
                                 const Matrix& texts, const Matrix& images,
                                 const Matrix& d_m) {
  params.validate();
  const std::size_t d = params.input_dim();
  const std::size_t r = params.manifold_dim;
  const std::size_t k = params.conv_kernel.size();
  const std::size_t half = k / 2;
  if (d_m.rows != texts.rows + images.rows || d_m.cols != r) {
    throw InvalidArgument("project_backward: upstream gradient shape mismatch");
  }

  ProjectionGrads g;
  g.d_conv_kernel.assign(k, 0.0);
  g.d_mlp_weights = Matrix(d, r);
  g.d_mlp_bias.assign(r, 0.0);
  g.d_texts = Matrix(texts.rows, d);

  // Text path: M_i = act(texts_i W + b).
  for (std::size_t i = 0; i < texts.rows; ++i) {
    auto x = texts.row(i);
    for (std::size_t c = 0; c < r; ++c) {
      double pre = params.mlp_bias[c];
      for (std::size_t u = 0; u < d; ++u) pre += x[u] * params.mlp_weights.at(u, c);
      const double gc = d_m.at(i, c) * activate_grad(params.activation, pre);
      g.d_mlp_bias[c] += gc;
      for (std::size_t u = 0; u < d; ++u) {
        g.d_mlp_weights.at(u, c) += gc * x[u];
        g.d_texts.at(i, u) += gc * params.mlp_weights.at(u, c);
      }
    }
  }

  // Image path: M_{C+j} = A act(conv(x_j) + bias).
  const Matrix resample = make_resample_matrix(d, r);
  std::vector<double> pre(d);
  std::vector<double> d_act(d);
  for (std::size_t j = 0; j < images.rows; ++j) {
    auto x = images.row(j);
    conv_row(x, params.conv_kernel, params.conv_bias, pre);
    std::fill(d_act.begin(), d_act.end(), 0.0);
    for (std::size_t c = 0; c < r; ++c) {
      const double gm = d_m.at(texts.rows + j, c);
      if (gm == 0.0) continue;
      for (std::size_t u = 0; u < d; ++u) d_act[u] += gm * resample.at(c, u);
    }
    for (std::size_t u = 0; u < d; ++u) {
      const double gc = d_act[u] * activate_grad(params.activation, pre[u]);
      g.d_conv_bias += gc;
      for (std::size_t m = 0; m < k; ++m) {
        const std::size_t src = (u + m + d - half) % d;
        g.d_conv_kernel[m] += gc * x[src];
      }
    }
  }
  return g;
}

std::string projection_to_json(const ProjectionPair& p) {
  nlohmann::json j;
  j["kernel"] = p.conv_kernel;
  j["conv_bias"] = p.conv_bias;
  j["weights"] = p.mlp_weights.data;
  j["embed_dim"] = p.mlp_weights.rows;
  j["manifold_dim"] = p.manifold_dim;
  j["bias"] = p.mlp_bias;
  j["activation"] = p.activation == Activation::kTanh ? "tanh" : "identity";
  return j.dump(2) + "\n";
}

ProjectionPair projection_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument(std::string("projection_from_json: ") + e.what());
  }
  ProjectionPair p;
  try {
    p.conv_kernel = j.at("kernel").get<std::vector<double>>();
    p.conv_bias = j.at("conv_bias").get<double>();
    const auto rows = j.at("embed_dim").get<std::size_t>();
    p.manifold_dim = j.at("manifold_dim").get<std::size_t>();
    p.mlp_weights = Matrix(rows, p.manifold_dim);
    p.mlp_weights.data = j.at("weights").get<std::vector<double>>();
    if (p.mlp_weights.data.size() != rows * p.manifold_dim) {
      throw InvalidArgument("projection_from_json: weight count mismatch");
    }
    p.mlp_bias = j.at("bias").get<std::vector<double>>();
    const auto act = j.at("activation").get<std::string>();
    if (act == "tanh") {
      p.activation = Activation::kTanh;
    } else if (act == "identity") {
      p.activation = Activation::kIdentity;
    } else {
      throw InvalidArgument("projection_from_json: unknown activation " + act);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("projection_from_json: ") + e.what());
  }
  p.validate();
  return p;
}

}  // namespace ame
