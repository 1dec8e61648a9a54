#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ame/numerics.hpp"
#include "ame/rsm.hpp"
#include "ame/synthgen.hpp"

namespace ame {

enum class StudentInit { kRandom, kTeacher };

/// Trainable class embeddings scored against images by cosine similarity.
/// Rows are renormalized to unit norm after every optimizer step.
struct StudentModel {
  Matrix texts;  // C x d
  double logit_temperature = 0.07;

  static StudentModel seeded(std::size_t num_classes, std::size_t embed_dim,
                             std::uint64_t seed, double logit_temperature = 0.07);
  static StudentModel from_teacher(const TeacherModel& teacher,
                                   double logit_temperature = 0.07);
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  double learning_rate = 0.005;
  double omega = 50.0;          // weight on the manifold entropy term
  double kd_temperature = 1.0;  // tau in the distillation loss
  std::uint64_t seed = 1;

  // Artifact knobs beyond the published training protocol.
  double kd_weight = 1.0;  // 0 switches the distillation term off
  std::size_t manifold_dim = 8;
  std::size_t kernel_width = 3;
  double logit_temperature = 0.07;
  bool projections_learnable = true;
  bool identity_projections = false;  // start from the exact identity map
  // Bias terms can translate every manifold row to the same point regardless
  // of its input, which degenerates the manifold no matter what the
  // distillation term does. By default they start at zero and stay frozen;
  // they remain parameters (checkpointed, differentiated, gradient-checked).
  bool train_projection_biases = false;
  StudentInit student_init = StudentInit::kRandom;

  void validate() const;  // throws InvalidArgument
};

/// One loss evaluation: both terms, the weighted total, and the analytic
/// gradients of each term over the full trainable flattening
/// [student texts row-major, conv kernel, conv bias, mlp weights, mlp bias].
struct LossBreakdown {
  double kd = 0.0;
  double manifold_entropy = 0.0;
  double total = 0.0;
  std::vector<double> grad_kd;
  std::vector<double> grad_entropy;
};

/// Student plus projections as one flat parameter vector; the flattening is
/// what the optimizer steps and what finite differences probe.
struct TrainableParams {
  StudentModel student;
  ProjectionPair projections;

  std::size_t student_param_count() const { return student.texts.data.size(); }
  std::size_t param_count() const {
    return student_param_count() + projections.param_count();
  }
  std::vector<double> flatten() const;
  void assign_from_flat(std::span<const double> flat);
};

/// Logit (j, i) = cosine_sim(image_j, student_text_i) / logit_temperature.
Matrix student_logits(const StudentModel& student, const Matrix& images);

/// Mean over rows of tau^2 * KL(softmax(z_t/tau) || softmax(z_s/tau)).
double kd_loss(const Matrix& teacher_logits_matrix,
               const Matrix& student_logits_matrix, double temperature);

/// Full objective on one batch. The manifold stacks `texts_for_manifold`
/// (the student's own text rows when null, in which case entropy gradients
/// flow into the student block) above the projected batch images.
LossBreakdown total_loss(const StudentModel& student,
                         const ProjectionPair& projections,
                         const Matrix& batch_images,
                         const Matrix* texts_for_manifold,
                         const TeacherModel& teacher, const TrainConfig& cfg);

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double kd = 0.0;
  double entropy = 0.0;
  double total = 0.0;
  double grad_angle_deg = 0.0;  // NaN when either gradient vanishes
  double zeta_hat = 0.0;        // NaN when fewer than 2 training classes
};

struct TrainTrace {
  std::vector<StepRecord> steps;
  std::vector<double> epoch_mean_entropy;

  /// Header plus one row per step: step,epoch,kd,entropy,total,
  /// grad_angle_deg,zeta_hat.
  void write_csv(std::ostream& os) const;
};

struct TrainResult {
  StudentModel student;        // full model; rows of untrained classes keep their init
  ProjectionPair projections;
  TrainTrace trace;
};

/// Plain SGD over the base-class split of `dataset`, teacher logits as the
/// only supervision. Deterministic for a fixed config. Throws DivergenceError
/// on a non-finite loss.
TrainResult train(const SyntheticDataset& dataset, const TeacherModel& teacher,
                  const TrainConfig& cfg);

/// Row-weighted mean of per-batch totals over one split, batched exactly like
/// training so train and held-out losses are on the same scale.
double split_loss(const StudentModel& student, const ProjectionPair& projections,
                  const Matrix& images, const TeacherModel& teacher,
                  const TrainConfig& cfg);

/// JSON checkpoint round-trip for the student.
std::string student_to_json(const StudentModel& s);
StudentModel student_from_json(const std::string& text);

}  // namespace ame
