#include "ame/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "ame/diagnostics.hpp"
#include "ame/error.hpp"
#include "ame/rng.hpp"
#include "json.hpp"

namespace ame {

namespace {

Matrix rows_subset(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out(idx.size(), m.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = m.row(idx[i]);
    auto dst = out.row(i);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return out;
}

}  // namespace

StudentModel StudentModel::seeded(std::size_t num_classes, std::size_t embed_dim,
                                  std::uint64_t seed, double logit_temperature) {
  Rng rng(mix_seed(seed, 0x53545544ULL));  // "STUD"
  StudentModel s;
  s.texts = Matrix(num_classes, embed_dim);
  for (std::size_t i = 0; i < num_classes; ++i) {
    auto row = s.texts.row(i);
    double n = 0.0;
    do {
      for (double& v : row) v = rng.normal();
      n = norm(row);
    } while (n < 1e-9);
    for (double& v : row) v /= n;
  }
  s.logit_temperature = logit_temperature;
  return s;
}

StudentModel StudentModel::from_teacher(const TeacherModel& teacher,
                                        double logit_temperature) {
  return StudentModel{teacher.teacher_texts, logit_temperature};
}

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("TrainConfig: epochs must be positive");
  if (batch_size < 1) throw InvalidArgument("TrainConfig: batch_size must be positive");
  if (learning_rate < 0.0 || !std::isfinite(learning_rate)) {
    throw InvalidArgument("TrainConfig: learning_rate must be nonnegative");
  }
  if (omega < 0.0 || !std::isfinite(omega)) {
    throw InvalidArgument("TrainConfig: omega must be nonnegative");
  }
  if (!(kd_temperature > 0.0)) {
    throw InvalidArgument("TrainConfig: kd_temperature must be positive");
  }
  if (kd_weight < 0.0 || !std::isfinite(kd_weight)) {
    throw InvalidArgument("TrainConfig: kd_weight must be nonnegative");
  }
  if (manifold_dim < 1) throw InvalidArgument("TrainConfig: manifold_dim must be positive");
  if (kernel_width % 2 == 0 || kernel_width == 0) {
    throw InvalidArgument("TrainConfig: kernel_width must be odd");
  }
  if (!(logit_temperature > 0.0)) {
    throw InvalidArgument("TrainConfig: logit_temperature must be positive");
  }
}

std::vector<double> TrainableParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  flat.insert(flat.end(), student.texts.data.begin(), student.texts.data.end());
  const auto proj = projections.flatten();
  flat.insert(flat.end(), proj.begin(), proj.end());
  return flat;
}

void TrainableParams::assign_from_flat(std::span<const double> flat) {
  if (flat.size() != param_count()) {
    throw InvalidArgument("TrainableParams: flat size mismatch");
  }
  const std::size_t s = student_param_count();
  std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(s),
            student.texts.data.begin());
  projections.assign_from_flat(flat.subspan(s));
}

Matrix student_logits(const StudentModel& student, const Matrix& images) {
  if (images.cols != student.texts.cols) {
    throw InvalidArgument("student_logits: embedding width mismatch");
  }
  Matrix out(images.rows, student.texts.rows);
  for (std::size_t j = 0; j < images.rows; ++j) {
    for (std::size_t i = 0; i < student.texts.rows; ++i) {
      out.at(j, i) = cosine_sim(images.row(j), student.texts.row(i)) /
                     student.logit_temperature;
    }
  }
  return out;
}

double kd_loss(const Matrix& teacher_logits_matrix,
               const Matrix& student_logits_matrix, double temperature) {
  if (teacher_logits_matrix.rows != student_logits_matrix.rows ||
      teacher_logits_matrix.cols != student_logits_matrix.cols) {
    throw InvalidArgument("kd_loss: logit shape mismatch");
  }
  if (teacher_logits_matrix.rows == 0) {
    throw InvalidArgument("kd_loss: empty logit matrix");
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < teacher_logits_matrix.rows; ++j) {
    ProbVector p = softmax(teacher_logits_matrix.row(j), temperature);
    ProbVector q = softmax(student_logits_matrix.row(j), temperature);
    acc += temperature * temperature * kl_div(p, q);
  }
  return acc / static_cast<double>(teacher_logits_matrix.rows);
}

LossBreakdown total_loss(const StudentModel& student,
                         const ProjectionPair& projections,
                         const Matrix& batch_images,
                         const Matrix* texts_for_manifold,
                         const TeacherModel& teacher, const TrainConfig& cfg) {
  if (batch_images.rows == 0) throw InvalidArgument("total_loss: empty batch");
  if (student.texts.rows != teacher.teacher_texts.rows) {
    throw InvalidArgument("total_loss: student/teacher class count mismatch");
  }

  const std::size_t n = batch_images.rows;
  const std::size_t c = student.texts.rows;
  const std::size_t d = student.texts.cols;
  const double tau = cfg.kd_temperature;
  const double logit_t = student.logit_temperature;

  TrainableParams shape{student, projections};
  LossBreakdown out;
  out.grad_kd.assign(shape.param_count(), 0.0);
  out.grad_entropy.assign(shape.param_count(), 0.0);

  // Distillation term and its gradient into the student rows through the
  // cosine scorer.
  const Matrix z_t = teacher_logits(teacher, batch_images);
  const Matrix z_s = student_logits(student, batch_images);
  double kd_acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    ProbVector p = softmax(z_t.row(j), tau);
    ProbVector q = softmax(z_s.row(j), tau);
    kd_acc += tau * tau * kl_div(p, q);

    auto v = batch_images.row(j);
    const double v_norm = norm(v);
    for (std::size_t i = 0; i < c; ++i) {
      // d(kd)/d(z_s[j][i]) for the batch mean of tau^2 KL.
      const double dz = tau * (q[i] - p[i]) / static_cast<double>(n);
      if (dz == 0.0) continue;
      auto s_row = student.texts.row(i);
      const double s_norm = norm(s_row);
      const double cos_ji = dot(v, s_row) / (v_norm * s_norm);
      const double scale = dz / logit_t;
      for (std::size_t u = 0; u < d; ++u) {
        out.grad_kd[i * d + u] +=
            scale * (v[u] / (v_norm * s_norm) - cos_ji * s_row[u] / (s_norm * s_norm));
      }
    }
  }
  out.kd = kd_acc / static_cast<double>(n);

  // Manifold entropy term.
  const Matrix& manifold_texts =
      texts_for_manifold != nullptr ? *texts_for_manifold : student.texts;
  auto [projected_texts, projected_images] =
      apply_projections(projections, manifold_texts, batch_images);
  const Manifold manifold = assemble_manifold(projected_texts, projected_images);
  out.manifold_entropy = manifold.entropy_value;

  const ManifoldEntropyGrad hg = manifold_entropy_grad(manifold);
  const ProjectionGrads pg =
      project_backward(projections, manifold_texts, batch_images, hg.d_m);
  const std::size_t student_params = shape.student_param_count();
  if (texts_for_manifold == nullptr) {
    std::copy(pg.d_texts.data.begin(), pg.d_texts.data.end(),
              out.grad_entropy.begin());
  }
  const auto proj_grad = pg.flatten_params();
  std::copy(proj_grad.begin(), proj_grad.end(),
            out.grad_entropy.begin() + static_cast<std::ptrdiff_t>(student_params));

  out.total = cfg.kd_weight * out.kd + cfg.omega * out.manifold_entropy;
  return out;
}

void TrainTrace::write_csv(std::ostream& os) const {
  os << "step,epoch,kd,entropy,total,grad_angle_deg,zeta_hat\n";
  char buf[512];
  for (const auto& s : steps) {
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                  s.step, s.epoch, s.kd, s.entropy, s.total, s.grad_angle_deg,
                  s.zeta_hat);
    os << buf;
  }
}

TrainResult train(const SyntheticDataset& dataset, const TeacherModel& teacher,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.base_classes.empty()) {
    throw InvalidArgument("train: dataset has no base classes");
  }
  const std::size_t d = dataset.images.cols;
  const std::size_t c_total = dataset.texts.rows;
  if (teacher.teacher_texts.rows != c_total || teacher.teacher_texts.cols != d) {
    throw InvalidArgument("train: teacher shape does not match the dataset");
  }

  // Base-to-New protocol: optimization sees base classes only.
  const std::vector<std::size_t>& base = dataset.base_classes;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> train_labels;  // base-local
  for (std::size_t r = 0; r < dataset.images.rows; ++r) {
    auto it = std::find(base.begin(), base.end(), dataset.labels[r]);
    if (it != base.end()) {
      train_rows.push_back(r);
      train_labels.push_back(static_cast<std::size_t>(it - base.begin()));
    }
  }
  if (train_rows.empty()) throw InvalidArgument("train: no base-class samples");
  const Matrix train_images = rows_subset(dataset.images, train_rows);

  StudentModel full_student =
      cfg.student_init == StudentInit::kTeacher
          ? StudentModel::from_teacher(teacher, cfg.logit_temperature)
          : StudentModel::seeded(c_total, d, cfg.seed, cfg.logit_temperature);

  TrainableParams params;
  params.student.texts = rows_subset(full_student.texts, base);
  params.student.logit_temperature = cfg.logit_temperature;
  if (cfg.identity_projections) {
    if (cfg.manifold_dim != d) {
      throw InvalidArgument(
          "train: identity projections require manifold_dim == embed_dim");
    }
    params.projections = ProjectionPair::identity(d);
  } else {
    params.projections = ProjectionPair::seeded(d, cfg.manifold_dim,
                                                cfg.kernel_width, cfg.seed);
    if (!cfg.train_projection_biases) {
      params.projections.conv_bias = 0.0;
      std::fill(params.projections.mlp_bias.begin(),
                params.projections.mlp_bias.end(), 0.0);
    }
  }
  const TeacherModel base_teacher{rows_subset(teacher.teacher_texts, base),
                                  teacher.teacher_temperature};

  const std::size_t student_params = params.student_param_count();
  const std::size_t trainable =
      cfg.projections_learnable ? params.param_count() : student_params;
  const std::size_t conv_bias_index =
      student_params + params.projections.conv_kernel.size();
  const std::size_t mlp_bias_start =
      params.param_count() - params.projections.mlp_bias.size();
  auto frozen_coordinate = [&](std::size_t i) {
    return !cfg.train_projection_biases &&
           (i == conv_bias_index || i >= mlp_bias_start);
  };

  TrainResult result;
  result.trace.steps.reserve(cfg.epochs * (train_rows.size() / cfg.batch_size + 1));

  std::vector<std::size_t> order(train_rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, 0x45504f43ULL + epoch));  // "EPOC"
    shuffle_rng.shuffle(order);

    double entropy_sum = 0.0;
    std::size_t entropy_count = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(start + cfg.batch_size, order.size());
      std::vector<std::size_t> batch_idx(order.begin() + start, order.begin() + stop);
      // The shuffle decides membership only; a fixed row order inside the
      // batch pins the floating-point summation order.
      std::sort(batch_idx.begin(), batch_idx.end());
      Matrix batch = rows_subset(train_images, batch_idx);

      LossBreakdown loss = total_loss(params.student, params.projections, batch,
                                      nullptr, base_teacher, cfg);
      if (!std::isfinite(loss.total)) {
        throw DivergenceError("train: non-finite loss at step " + std::to_string(step),
                              step, loss.kd, loss.manifold_entropy, loss.total);
      }

      double angle = std::numeric_limits<double>::quiet_NaN();
      {
        std::span<const double> gk(loss.grad_kd.data(), trainable);
        std::span<const double> ge(loss.grad_entropy.data(), trainable);
        if (norm(gk) > 0.0 && norm(ge) > 0.0) angle = gradient_angle(gk, ge);
      }

      double zeta = std::numeric_limits<double>::quiet_NaN();
      if (base.size() >= 2) {
        auto [pt, pv] = apply_projections(params.projections,
                                          params.student.texts, train_images);
        zeta = alignment_metrics(class_manifold_rows(pt, pv, train_labels)).zeta_hat;
      }

      result.trace.steps.push_back({step, epoch, loss.kd, loss.manifold_entropy,
                                    loss.total, angle, zeta});
      entropy_sum += loss.manifold_entropy;
      ++entropy_count;

      if (cfg.learning_rate > 0.0) {
        auto flat = params.flatten();
        bool student_touched = false;
        for (std::size_t i = 0; i < trainable; ++i) {
          if (frozen_coordinate(i)) continue;
          const double delta =
              cfg.kd_weight * loss.grad_kd[i] + cfg.omega * loss.grad_entropy[i];
          if (delta != 0.0 && i < student_params) student_touched = true;
          flat[i] -= cfg.learning_rate * delta;
          if (!std::isfinite(flat[i])) {
            throw DivergenceError(
                "train: non-finite parameter update at step " + std::to_string(step),
                step, loss.kd, loss.manifold_entropy, loss.total);
          }
        }
        params.assign_from_flat(flat);
        if (student_touched) {
          for (std::size_t i = 0; i < params.student.texts.rows; ++i) {
            auto row = params.student.texts.row(i);
            const double row_norm = norm(row);
            if (!std::isfinite(row_norm) || row_norm == 0.0) {
              throw DivergenceError(
                  "train: student row " + std::to_string(i) +
                      " lost its direction at step " + std::to_string(step),
                  step, loss.kd, loss.manifold_entropy, loss.total);
            }
            for (double& v : row) v /= row_norm;
          }
        }
      }
      ++step;
    }
    result.trace.epoch_mean_entropy.push_back(
        entropy_count > 0 ? entropy_sum / static_cast<double>(entropy_count) : 0.0);
  }

  // Trained base rows land back in the full model; other classes keep init.
  for (std::size_t i = 0; i < base.size(); ++i) {
    auto src = params.student.texts.row(i);
    auto dst = full_student.texts.row(base[i]);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  result.student = full_student;
  result.projections = params.projections;
  return result;
}

double split_loss(const StudentModel& student, const ProjectionPair& projections,
                  const Matrix& images, const TeacherModel& teacher,
                  const TrainConfig& cfg) {
  if (images.rows == 0) throw InvalidArgument("split_loss: empty image set");
  double acc = 0.0;
  std::size_t rows = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < images.rows; start += cfg.batch_size) {
    const std::size_t stop = std::min(start + cfg.batch_size, images.rows);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    Matrix batch = rows_subset(images, idx);
    LossBreakdown loss =
        total_loss(student, projections, batch, nullptr, teacher, cfg);
    acc += loss.total * static_cast<double>(batch.rows);
    rows += batch.rows;
  }
  return acc / static_cast<double>(rows);
}

std::string student_to_json(const StudentModel& s) {
  nlohmann::json j;
  j["texts"] = s.texts.data;
  j["num_classes"] = s.texts.rows;
  j["embed_dim"] = s.texts.cols;
  j["logit_temperature"] = s.logit_temperature;
  return j.dump(2) + "\n";
}

StudentModel student_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument(std::string("student_from_json: ") + e.what());
  }
  StudentModel s;
  try {
    s.texts = Matrix(j.at("num_classes").get<std::size_t>(),
                     j.at("embed_dim").get<std::size_t>());
    s.texts.data = j.at("texts").get<std::vector<double>>();
    s.logit_temperature = j.at("logit_temperature").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("student_from_json: ") + e.what());
  }
  if (s.texts.data.size() != s.texts.rows * s.texts.cols) {
    throw InvalidArgument("student_from_json: text array size mismatch");
  }
  return s;
}

}  // namespace ame
