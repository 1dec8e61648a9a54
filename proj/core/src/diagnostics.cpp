#include "ame/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ame/error.hpp"

namespace ame {

namespace {

constexpr double kPi = 3.14159265358979323846;

double row_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

}  // namespace

double gradient_angle(std::span<const double> g1, std::span<const double> g2) {
  if (g1.size() != g2.size()) {
    throw InvalidArgument("gradient_angle: length mismatch");
  }
  const double n1 = norm(g1);
  const double n2 = norm(g2);
  if (n1 <= 0.0 || n2 <= 0.0) {
    throw InvalidArgument("gradient_angle: zero gradient has no direction");
  }
  const double c = std::clamp(dot(g1, g2) / (n1 * n2), -1.0, 1.0);
  return std::acos(c) * 180.0 / kPi;
}

double harmonic_mean(double base, double new_value) {
  const double sum = base + new_value;
  if (sum <= 0.0) return 0.0;
  return 2.0 * base * new_value / sum;
}

EvalReport evaluate(const StudentModel& student, const SyntheticDataset& dataset,
                    EvalSplit split) {
  const std::size_t c_total = dataset.texts.rows;
  EvalReport report;
  report.per_class_acc.assign(c_total, 0.0);

  auto accuracy_on = [&](const std::vector<std::size_t>& classes) -> double {
    if (classes.empty()) {
      throw InvalidArgument("evaluate: empty class split");
    }
    std::vector<std::size_t> correct(c_total, 0);
    std::vector<std::size_t> count(c_total, 0);
    std::size_t total = 0;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < dataset.images.rows; ++r) {
      const std::size_t label = dataset.labels[r];
      if (std::find(classes.begin(), classes.end(), label) == classes.end()) continue;
      // Argmax over the split's classes only; ties to the lowest class index.
      std::size_t best = classes[0];
      double best_score = -std::numeric_limits<double>::infinity();
      for (std::size_t cls : classes) {
        const double score =
            cosine_sim(dataset.images.row(r), student.texts.row(cls)) /
            student.logit_temperature;
        if (score > best_score) {
          best_score = score;
          best = cls;
        }
      }
      ++count[label];
      ++total;
      if (best == label) {
        ++hits;
        ++correct[label];
      }
    }
    if (total == 0) throw InvalidArgument("evaluate: split has no samples");
    for (std::size_t cls : classes) {
      if (count[cls] > 0) {
        report.per_class_acc[cls] =
            100.0 * static_cast<double>(correct[cls]) / static_cast<double>(count[cls]);
      }
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
  };

  if (split == EvalSplit::kBase || split == EvalSplit::kBoth) {
    report.base_acc = accuracy_on(dataset.base_classes);
  }
  if (split == EvalSplit::kNew || split == EvalSplit::kBoth) {
    report.new_acc = accuracy_on(dataset.new_classes);
  }
  report.hm = harmonic_mean(report.base_acc, report.new_acc);
  return report;
}

AlignmentMetrics alignment_metrics(const std::vector<Matrix>& rows_by_class) {
  if (rows_by_class.size() < 2) {
    throw InvalidArgument("alignment_metrics: need at least two classes");
  }
  for (const Matrix& m : rows_by_class) {
    if (m.rows == 0) throw InvalidArgument("alignment_metrics: empty class");
    if (m.cols != rows_by_class.front().cols) {
      throw InvalidArgument("alignment_metrics: column mismatch");
    }
  }

  const std::size_t width = rows_by_class.front().cols;
  std::vector<std::vector<double>> centers;
  centers.reserve(rows_by_class.size());
  double spread_acc = 0.0;
  std::size_t row_count = 0;
  for (const Matrix& m : rows_by_class) {
    std::vector<double> center(width, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
      for (std::size_t u = 0; u < width; ++u) center[u] += m.at(r, u);
    }
    for (double& v : center) v /= static_cast<double>(m.rows);
    for (std::size_t r = 0; r < m.rows; ++r) {
      spread_acc += row_distance(m.row(r), center);
      ++row_count;
    }
    centers.push_back(std::move(center));
  }

  AlignmentMetrics out;
  out.intra_spread = spread_acc / static_cast<double>(row_count);
  out.zeta_hat = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < centers.size(); ++a) {
    for (std::size_t b = a + 1; b < centers.size(); ++b) {
      out.zeta_hat = std::min(out.zeta_hat, row_distance(centers[a], centers[b]));
    }
  }
  return out;
}

std::vector<Matrix> class_manifold_rows(const Matrix& projected_texts,
                                        const Matrix& projected_images,
                                        const std::vector<std::size_t>& labels) {
  if (labels.size() != projected_images.rows) {
    throw InvalidArgument("class_manifold_rows: label count mismatch");
  }
  const std::size_t c = projected_texts.rows;
  const std::size_t width = projected_texts.cols;
  std::vector<std::vector<std::size_t>> members(c);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] >= c) throw InvalidArgument("class_manifold_rows: label out of range");
    members[labels[r]].push_back(r);
  }
  std::vector<Matrix> out;
  out.reserve(c);
  for (std::size_t cls = 0; cls < c; ++cls) {
    Matrix rows(1 + members[cls].size(), width);
    auto text = projected_texts.row(cls);
    std::copy(text.begin(), text.end(), rows.row(0).begin());
    for (std::size_t i = 0; i < members[cls].size(); ++i) {
      auto src = projected_images.row(members[cls][i]);
      std::copy(src.begin(), src.end(), rows.row(i + 1).begin());
    }
    out.push_back(std::move(rows));
  }
  return out;
}

GapSweepResult gap_sweep(const ClassGeometry& geometry,
                         const std::vector<std::size_t>& shot_grid,
                         const TrainConfig& cfg,
                         const std::vector<std::uint64_t>& seeds,
                         std::size_t test_set_size) {
  if (shot_grid.size() < 3) throw InvalidArgument("gap_sweep: need >= 3 grid points");
  if (seeds.size() < 3) throw InvalidArgument("gap_sweep: need >= 3 seeds");

  GapSweepResult result;
  const std::size_t base_count = (geometry.num_classes + 1) / 2;
  const std::size_t test_shots =
      (test_set_size + base_count - 1) / base_count;  // ceil

  // Equalized step budget: cfg.epochs spans the largest point; smaller points
  // run more epochs to see the same number of optimizer steps.
  const std::size_t max_shots = *std::max_element(shot_grid.begin(), shot_grid.end());
  const std::size_t batches_of = [&](std::size_t shots) {
    const std::size_t samples = shots * base_count;
    return (samples + cfg.batch_size - 1) / cfg.batch_size;
  }(max_shots);
  const std::size_t target_steps = cfg.epochs * batches_of;

  for (std::size_t shots : shot_grid) {
    for (std::uint64_t seed : seeds) {
      GapPoint point;
      point.seed = seed;
      point.n = shots * base_count;
      try {
        SyntheticDataset train_set = generate(geometry, shots, seed, 0);
        SyntheticDataset test_set = generate(geometry, test_shots, seed, 1);
        TeacherModel teacher = make_prototype_teacher(train_set);

        TrainConfig run_cfg = cfg;
        run_cfg.seed = seed;
        const std::size_t point_batches =
            (point.n + cfg.batch_size - 1) / cfg.batch_size;
        run_cfg.epochs = (target_steps + point_batches - 1) / point_batches;
        TrainResult trained = train(train_set, teacher, run_cfg);

        const std::vector<std::size_t>& base = train_set.base_classes;
        auto base_images = [&](const SyntheticDataset& ds) {
          std::vector<std::size_t> idx;
          for (std::size_t r = 0; r < ds.images.rows; ++r) {
            if (std::find(base.begin(), base.end(), ds.labels[r]) != base.end()) {
              idx.push_back(r);
            }
          }
          Matrix out(idx.size(), ds.images.cols);
          for (std::size_t i = 0; i < idx.size(); ++i) {
            auto src = ds.images.row(idx[i]);
            std::copy(src.begin(), src.end(), out.row(i).begin());
          }
          return out;
        };

        // Loss is scored with the base-restricted student/teacher, exactly as
        // the training objective saw them.
        StudentModel base_student;
        base_student.texts = Matrix(base.size(), train_set.images.cols);
        for (std::size_t i = 0; i < base.size(); ++i) {
          auto src = trained.student.texts.row(base[i]);
          std::copy(src.begin(), src.end(), base_student.texts.row(i).begin());
        }
        base_student.logit_temperature = trained.student.logit_temperature;
        TeacherModel base_teacher{Matrix(base.size(), train_set.images.cols),
                                  teacher.teacher_temperature};
        for (std::size_t i = 0; i < base.size(); ++i) {
          auto src = teacher.teacher_texts.row(base[i]);
          std::copy(src.begin(), src.end(), base_teacher.teacher_texts.row(i).begin());
        }

        TrainConfig task_cfg = run_cfg;
        task_cfg.omega = 0.0;  // score the distillation term alone
        point.train_loss = split_loss(base_student, trained.projections,
                                      base_images(train_set), base_teacher, task_cfg);
        point.test_loss = split_loss(base_student, trained.projections,
                                     base_images(test_set), base_teacher, task_cfg);
        point.gap = point.test_loss - point.train_loss;
        point.delta_hat = trained.trace.epoch_mean_entropy.back();
      } catch (const DivergenceError&) {
        point.diverged = true;
      }
      result.points.push_back(point);
    }
  }

  // Seed-averaged gaps per sample count, divergent points excluded.
  for (std::size_t shots : shot_grid) {
    const std::size_t n = shots * base_count;
    double acc = 0.0;
    std::size_t count = 0;
    for (const GapPoint& p : result.points) {
      if (p.n == n && !p.diverged) {
        acc += p.gap;
        ++count;
      }
    }
    result.grid_n.push_back(n);
    result.mean_gap.push_back(count > 0 ? acc / static_cast<double>(count)
                                        : std::numeric_limits<double>::quiet_NaN());
  }

  // Least-squares slope of ln(mean gap) against ln(n) over positive gaps.
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t i = 0; i < result.grid_n.size(); ++i) {
    if (std::isfinite(result.mean_gap[i]) && result.mean_gap[i] > 0.0) {
      xs.push_back(std::log(static_cast<double>(result.grid_n[i])));
      ys.push_back(std::log(result.mean_gap[i]));
    }
  }
  if (xs.size() >= 2) {
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxx += (xs[i] - mx) * (xs[i] - mx);
      sxy += (xs[i] - mx) * (ys[i] - my);
    }
    result.slope = sxy / sxx;
  } else {
    result.slope = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

}  // namespace ame
