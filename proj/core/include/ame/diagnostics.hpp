#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ame/distill.hpp"
#include "ame/numerics.hpp"
#include "ame/rsm.hpp"
#include "ame/synthgen.hpp"

namespace ame {

/// Angle between two gradient vectors in degrees, in [0, 180]. Throws
/// InvalidArgument on zero gradients or length mismatch; callers recording
/// traces treat that as a missing point.
double gradient_angle(std::span<const double> g1, std::span<const double> g2);

double harmonic_mean(double base, double new_value);

struct EvalReport {
  double base_acc = 0.0;  // percent
  double new_acc = 0.0;   // percent
  double hm = 0.0;        // percent
  std::vector<double> per_class_acc;  // length C; only evaluated classes filled
};

enum class EvalSplit { kBase, kNew, kBoth };

/// Top-1 accuracy with logits restricted to the split's classes; ties go to
/// the lowest class index. `hm` follows the harmonic-mean identity, with the
/// unevaluated side left at zero for single-split calls.
EvalReport evaluate(const StudentModel& student, const SyntheticDataset& dataset,
                    EvalSplit split);

struct AlignmentMetrics {
  double intra_spread = 0.0;  // mean distance of rows to their class center
  double zeta_hat = 0.0;      // minimum pairwise distance between class centers
};

/// Each entry holds one class's manifold rows (its text row plus its image
/// rows). Requires at least two non-empty classes.
AlignmentMetrics alignment_metrics(const std::vector<Matrix>& rows_by_class);

/// Groups projected rows by class: entry i is projected text row i stacked
/// with the projected image rows whose label is i.
std::vector<Matrix> class_manifold_rows(const Matrix& projected_texts,
                                        const Matrix& projected_images,
                                        const std::vector<std::size_t>& labels);

struct GapPoint {
  std::size_t n = 0;  // training sample count
  std::uint64_t seed = 0;
  // Distillation task loss with the converged parameters. Measuring the task
  // term keeps the regularizer's own train/test difference out of the gap.
  double train_loss = 0.0;
  double test_loss = 0.0;
  double gap = 0.0;
  double delta_hat = 0.0;  // final-epoch mean manifold entropy
  bool diverged = false;
};

struct GapSweepResult {
  std::vector<GapPoint> points;
  std::vector<std::size_t> grid_n;  // distinct sample counts, ascending
  std::vector<double> mean_gap;     // seed-averaged, aligned with grid_n
  double slope = 0.0;               // ln(mean gap) vs ln(n), least squares
};

/// Trains once per (shots, seed) on base classes and measures the train/test
/// loss gap on a held-out set drawn from the same prototypes. Every point
/// gets the same optimization budget in steps (cfg.epochs over the largest
/// grid point), so optimization error does not masquerade as a small-sample
/// gap. Divergent runs are flagged and excluded from the fit; the sweep
/// continues.
GapSweepResult gap_sweep(const ClassGeometry& geometry,
                         const std::vector<std::size_t>& shot_grid,
                         const TrainConfig& cfg,
                         const std::vector<std::uint64_t>& seeds,
                         std::size_t test_set_size = 1000);

}  // namespace ame
