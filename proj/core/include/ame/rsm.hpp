#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ame/numerics.hpp"

namespace ame {

enum class Activation { kIdentity, kTanh };

/// Learnable projection pair bridging the two modalities into the shared
/// manifold. Image rows go through a circular 1-D convolution over the
/// feature axis plus a scalar bias; text rows through a single linear layer.
/// Both paths apply `activation`, and the image path is then resampled from
/// the embedding width d to manifold_dim by a fixed averaging matrix.
struct ProjectionPair {
  std::vector<double> conv_kernel;  // odd length
  double conv_bias = 0.0;
  Matrix mlp_weights;               // d x R
  std::vector<double> mlp_bias;     // R
  std::size_t manifold_dim = 0;     // R
  Activation activation = Activation::kTanh;

  std::size_t input_dim() const { return mlp_weights.rows; }
  std::size_t kernel_width() const { return conv_kernel.size(); }

  /// Parameters drawn uniformly from [-0.1, 0.1].
  static ProjectionPair seeded(std::size_t embed_dim, std::size_t manifold_dim,
                               std::size_t kernel_width, std::uint64_t seed,
                               Activation act = Activation::kTanh);

  /// Exact identity map: delta kernel, identity weights, identity activation.
  /// Requires manifold_dim == embed_dim by construction.
  static ProjectionPair identity(std::size_t embed_dim);

  /// Flattening order: conv_kernel, conv_bias, mlp_weights (row-major),
  /// mlp_bias. Used by the optimizer and by finite-difference checks.
  std::size_t param_count() const;
  std::vector<double> flatten() const;
  void assign_from_flat(std::span<const double> flat);

  void validate() const;  // throws InvalidArgument
};

/// Fixed resampling matrix (r x d). Row i averages the source interval
/// [i*d/r, (i+1)*d/r) with fractional edge weights; rows sum to 1. Identity
/// when d == r.
Matrix make_resample_matrix(std::size_t d, std::size_t r);

/// The shared manifold: projected text rows stacked above projected image
/// rows, with per-row feature means, their softmax weights and the entropy.
struct Manifold {
  Matrix m;                     // (N+C) x R, text rows first
  std::size_t text_rows = 0;    // C
  std::vector<double> scores;   // s_t, length N+C
  ProbVector probs;             // softmax(scores), temperature 1
  double entropy_value = 0.0;
};

/// Projects texts through the linear path and images through the convolution
/// path. Returns (projected_texts C x R, projected_images N x R).
std::pair<Matrix, Matrix> apply_projections(const ProjectionPair& params,
                                            const Matrix& texts,
                                            const Matrix& images);

Manifold assemble_manifold(const Matrix& projected_texts,
                           const Matrix& projected_images);

struct ManifoldEntropyGrad {
  std::vector<double> d_scores;  // dH/ds, length N+C; always sums to 0
  Matrix d_m;                    // dH/dM = d_scores / R broadcast per row
};

/// Exact softmax chain-rule gradient of the manifold entropy:
/// dH/ds_j = -p_j (ln p_j + H).
ManifoldEntropyGrad manifold_entropy_grad(const Manifold& manifold);

/// Gradients of a scalar with respect to every projection parameter and to
/// the text input rows, given dScalar/dM over the assembled manifold.
struct ProjectionGrads {
  std::vector<double> d_conv_kernel;
  double d_conv_bias = 0.0;
  Matrix d_mlp_weights;
  std::vector<double> d_mlp_bias;
  Matrix d_texts;  // C x d; nonzero because the text rows are model inputs

  std::vector<double> flatten_params() const;  // same order as ProjectionPair
};

ProjectionGrads project_backward(const ProjectionPair& params,
                                 const Matrix& texts, const Matrix& images,
                                 const Matrix& d_m);

/// JSON checkpoint round-trip for the projection parameters.
std::string projection_to_json(const ProjectionPair& p);
ProjectionPair projection_from_json(const std::string& text);

}  // namespace ame
