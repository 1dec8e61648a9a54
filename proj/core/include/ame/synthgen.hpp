#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ame/numerics.hpp"

namespace ame {

/// Controls the synthetic class layout on the unit sphere. The defaults give
/// ambiguous, boundary-heavy geometry: classes separable but with enough
/// within-class scatter that entropy-driven degeneration is visible.
struct ClassGeometry {
  std::size_t num_classes = 4;
  std::size_t embed_dim = 16;
  /// Minimum pairwise angle between class prototypes, radians.
  double prototype_separation = 1.0;
  double noise_scale = 0.25;
  /// Fraction of each class's samples seeded at the normalized midpoint
  /// toward the angularly nearest other prototype before noise is added.
  double boundary_fraction = 0.25;

  void validate() const;  // throws InvalidArgument
};

/// A seeded two-modality dataset: unit-norm image rows with labels, one
/// unit-norm text row (prototype) per class, and a base/new class split by
/// ascending class index.
struct SyntheticDataset {
  Matrix images;  // N_total x d
  std::vector<std::size_t> labels;
  Matrix texts;   // C x d
  std::vector<std::size_t> base_classes;
  std::vector<std::size_t> new_classes;

  // Provenance, carried for serialization and reproducibility.
  ClassGeometry geometry;
  std::size_t shots_per_class = 0;
  std::uint64_t seed = 0;
  std::uint64_t sample_stream = 0;
};

/// Frozen scorer standing in for a pretrained teacher: cosine similarity
/// against fixed text embeddings at a fixed sharpness. Never updated.
struct TeacherModel {
  Matrix teacher_texts;  // C x d, unit rows
  double teacher_temperature = 0.07;
};

/// Deterministic generation. Prototypes depend only on (geometry, seed);
/// `sample_stream` selects an independent noise stream so train and held-out
/// sets can share prototypes without sharing samples. Throws
/// GeometryInfeasible if the angle constraint cannot be met within the
/// rejection budget.
SyntheticDataset generate(const ClassGeometry& geometry,
                          std::size_t shots_per_class, std::uint64_t seed,
                          std::uint64_t sample_stream = 0);

/// Noiseless prototype teacher over the dataset's text rows.
TeacherModel make_prototype_teacher(const SyntheticDataset& dataset,
                                    double temperature = 0.07);

/// Logit (j, i) = cosine_sim(image_j, teacher_text_i) / teacher_temperature.
Matrix teacher_logits(const TeacherModel& teacher, const Matrix& images);

/// JSON round-trip: geometry, seed, row-major embeddings, labels, splits.
std::string dataset_to_json(const SyntheticDataset& ds);
SyntheticDataset dataset_from_json(const std::string& text);

}  // namespace ame
