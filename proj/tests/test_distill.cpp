#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <sstream>
#include <vector>

#include "ame/distill.hpp"
#include "ame/error.hpp"
#include "ame/rng.hpp"
#include "doctest.h"
#include "support/reference_impl.hpp"

using namespace ame;

namespace {

Matrix random_unit_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = m.row(r);
    for (double& v : row) v = rng.normal();
    double n = norm(row);
    for (double& v : row) v /= n;
  }
  return m;
}

ClassGeometry bench_geometry() { return ClassGeometry{}; }

double grad_relative_error(const std::vector<double>& analytic,
                           const std::vector<double>& fd) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    num += (analytic[i] - fd[i]) * (analytic[i] - fd[i]);
    den += fd[i] * fd[i];
  }
  return std::sqrt(num) / (std::sqrt(den) + 1e-10);
}

}  // namespace

TEST_CASE("student logits match the teacher when parameters coincide") {
  Matrix images = random_unit_rows(5, 8, 1);
  Matrix texts = random_unit_rows(3, 8, 2);
  TeacherModel teacher{texts, 0.07};
  StudentModel student{texts, 0.07};
  Matrix zt = teacher_logits(teacher, images);
  Matrix zs = student_logits(student, images);
  CHECK(zt.data == zs.data);
}

TEST_CASE("student logits frozen values") {
  StudentModel student;
  student.texts = Matrix(2, 3);
  student.texts.at(0, 0) = 1.0;
  student.texts.at(1, 1) = 1.0;
  student.logit_temperature = 0.07;

  Matrix image(1, 3);
  image.at(0, 0) = 1.0;
  Matrix z = student_logits(student, image);
  CHECK(z.at(0, 0) == doctest::Approx(1.0 / 0.07).epsilon(1e-12));  // 14.2857
  CHECK(z.at(0, 1) == doctest::Approx(0.0));

  Matrix orthogonal(1, 3);
  orthogonal.at(0, 2) = 1.0;
  Matrix z2 = student_logits(student, orthogonal);
  CHECK(z2.at(0, 0) == doctest::Approx(0.0));
  CHECK(z2.at(0, 1) == doctest::Approx(0.0));

  Matrix bad(1, 4);
  bad.at(0, 0) = 1.0;
  CHECK_THROWS_AS(student_logits(student, bad), InvalidArgument);
}

TEST_CASE("kd_loss frozen values and scaling identity") {
  Matrix z(1, 2);
  z.at(0, 0) = 3.0;
  z.at(0, 1) = -1.0;
  CHECK(kd_loss(z, z, 1.0) == 0.0);

  Matrix zt(1, 2);
  zt.at(0, 0) = 1.0;
  Matrix zs(1, 2);
  zs.at(0, 1) = 1.0;
  // 4 * binary KL at sigma(0.5)
  CHECK(kd_loss(zt, zs, 2.0) == doctest::Approx(0.48983732480741826).epsilon(1e-12));

  // Scaling logits by tau with a tau-matched softmax reproduces the tau=1 KL
  // up to the tau^2 factor.
  Rng rng(5);
  Matrix a(3, 4);
  Matrix b(3, 4);
  for (double& v : a.data) v = rng.uniform(-2.0, 2.0);
  for (double& v : b.data) v = rng.uniform(-2.0, 2.0);
  const double tau = 3.0;
  Matrix a_scaled = a;
  Matrix b_scaled = b;
  for (double& v : a_scaled.data) v *= tau;
  for (double& v : b_scaled.data) v *= tau;
  CHECK(kd_loss(a_scaled, b_scaled, tau) ==
        doctest::Approx(tau * tau * kd_loss(a, b, 1.0)).epsilon(1e-12));

  Matrix mismatched(2, 2);
  CHECK_THROWS_AS(kd_loss(zt, mismatched, 1.0), InvalidArgument);
}

TEST_CASE("total_loss degenerate weightings") {
  Matrix images = random_unit_rows(6, 16, 11);
  Matrix texts = random_unit_rows(4, 16, 12);
  TeacherModel teacher{texts, 0.07};
  StudentModel student = StudentModel::seeded(4, 16, 3, 0.07);
  ProjectionPair projections = ProjectionPair::seeded(16, 8, 3, 3);
  TrainConfig cfg;
  cfg.omega = 0.0;

  LossBreakdown loss = total_loss(student, projections, images, nullptr, teacher, cfg);
  CHECK(loss.total == loss.kd);

  // Teacher-matched student and an all-collapsed manifold: total is exactly
  // omega * ln(N + C).
  StudentModel copy{texts, teacher.teacher_temperature};
  ProjectionPair flat_proj = ProjectionPair::seeded(16, 8, 3, 3);
  for (double& v : flat_proj.conv_kernel) v = 0.0;
  flat_proj.conv_bias = 0.0;
  for (double& v : flat_proj.mlp_weights.data) v = 0.0;
  for (double& v : flat_proj.mlp_bias) v = 0.0;
  TrainConfig cfg2;
  cfg2.omega = 50.0;
  LossBreakdown loss2 = total_loss(copy, flat_proj, images, nullptr, teacher, cfg2);
  CHECK(loss2.kd == 0.0);
  CHECK(loss2.total == doctest::Approx(50.0 * std::log(10.0)).epsilon(1e-12));

  Matrix empty(0, 16);
  CHECK_THROWS_AS(total_loss(student, projections, empty, nullptr, teacher, cfg),
                  InvalidArgument);
}

TEST_CASE("total_loss agrees with the straight-line reference") {
  SyntheticDataset ds = generate(bench_geometry(), 4, 1);
  TeacherModel teacher = make_prototype_teacher(ds);
  StudentModel student = StudentModel::seeded(4, 16, 1, 0.07);
  ProjectionPair projections = ProjectionPair::seeded(16, 8, 3, 1);
  TrainConfig cfg;

  Matrix batch(8, 16);
  for (std::size_t r = 0; r < 8; ++r) {
    auto src = ds.images.row(r);
    std::copy(src.begin(), src.end(), batch.row(r).begin());
  }
  LossBreakdown lib = total_loss(student, projections, batch, nullptr, teacher, cfg);
  const double reference =
      ref::naive_total(batch, teacher.teacher_texts, teacher.teacher_temperature,
                       student.texts, student.logit_temperature,
                       cfg.kd_temperature, projections, cfg.kd_weight, cfg.omega);
  CHECK(std::abs(lib.total - reference) <= 1e-10);
}

TEST_CASE("analytic gradients match finite differences across configurations") {
  const std::vector<std::array<std::size_t, 3>> shapes{
      {2, 8, 4}, {4, 16, 8}, {8, 8, 4}, {4, 8, 8}, {2, 16, 4}};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto [c, d, r] = shapes[seed % shapes.size()];
    Matrix images = random_unit_rows(6, d, seed * 11 + 1);
    Matrix teacher_texts = random_unit_rows(c, d, seed * 11 + 2);
    TeacherModel teacher{teacher_texts, 0.07};
    TrainConfig cfg;
    cfg.logit_temperature = 0.1;
    cfg.omega = 50.0;

    TrainableParams params;
    params.student = StudentModel::seeded(c, d, seed, cfg.logit_temperature);
    params.projections = ProjectionPair::seeded(d, r, 3, seed);

    LossBreakdown loss = total_loss(params.student, params.projections, images,
                                    nullptr, teacher, cfg);

    TrainableParams probe = params;
    auto eval_part = [&](const std::vector<double>& flat, int which) {
      probe.assign_from_flat(flat);
      LossBreakdown b = total_loss(probe.student, probe.projections, images,
                                   nullptr, teacher, cfg);
      return which == 0 ? b.kd : which == 1 ? b.manifold_entropy : b.total;
    };
    auto flat = params.flatten();
    std::vector<double> fd_kd = finite_diff_grad(
        [&](const std::vector<double>& x) { return eval_part(x, 0); }, flat);
    std::vector<double> fd_h = finite_diff_grad(
        [&](const std::vector<double>& x) { return eval_part(x, 1); }, flat);
    std::vector<double> fd_total = finite_diff_grad(
        [&](const std::vector<double>& x) { return eval_part(x, 2); }, flat);

    std::vector<double> analytic_total(flat.size());
    for (std::size_t i = 0; i < flat.size(); ++i) {
      analytic_total[i] = cfg.kd_weight * loss.grad_kd[i] + cfg.omega * loss.grad_entropy[i];
    }
    CHECK(grad_relative_error(loss.grad_kd, fd_kd) <= 1e-5);
    CHECK(grad_relative_error(loss.grad_entropy, fd_h) <= 1e-5);
    CHECK(grad_relative_error(analytic_total, fd_total) <= 1e-5);
  }
}

TEST_CASE("external manifold texts stop entropy gradients into the student") {
  Matrix images = random_unit_rows(5, 8, 31);
  Matrix teacher_texts = random_unit_rows(3, 8, 32);
  Matrix frozen_texts = random_unit_rows(3, 8, 33);
  TeacherModel teacher{teacher_texts, 0.07};
  StudentModel student = StudentModel::seeded(3, 8, 7, 0.07);
  ProjectionPair projections = ProjectionPair::seeded(8, 4, 3, 7);
  TrainConfig cfg;

  LossBreakdown loss =
      total_loss(student, projections, images, &frozen_texts, teacher, cfg);
  for (std::size_t i = 0; i < student.texts.data.size(); ++i) {
    CHECK(loss.grad_entropy[i] == 0.0);
  }
}

TEST_CASE("train with zero learning rate is a bit-exact no-op") {
  ClassGeometry g = bench_geometry();
  SyntheticDataset ds = generate(g, 4, 1);
  TeacherModel teacher = make_prototype_teacher(ds);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 3;
  cfg.batch_size = 64;  // one batch per epoch, so every epoch sees the same batch
  TrainResult result = train(ds, teacher, cfg);

  StudentModel init = StudentModel::seeded(4, 16, cfg.seed, cfg.logit_temperature);
  CHECK(result.student.texts.data == init.texts.data);
  ProjectionPair init_proj = ProjectionPair::seeded(16, cfg.manifold_dim,
                                                    cfg.kernel_width, cfg.seed);
  init_proj.conv_bias = 0.0;  // train() starts with frozen zero biases
  std::fill(init_proj.mlp_bias.begin(), init_proj.mlp_bias.end(), 0.0);
  CHECK(result.projections.flatten() == init_proj.flatten());
  for (const StepRecord& s : result.trace.steps) {
    CHECK(s.total == result.trace.steps.front().total);
    CHECK(s.kd == result.trace.steps.front().kd);
  }
}

TEST_CASE("projection biases stay frozen at zero unless asked to train") {
  SyntheticDataset ds = generate(bench_geometry(), 8, 6);
  TeacherModel teacher = make_prototype_teacher(ds);
  TrainConfig cfg;
  cfg.epochs = 5;
  TrainResult frozen = train(ds, teacher, cfg);
  CHECK(frozen.projections.conv_bias == 0.0);
  for (double b : frozen.projections.mlp_bias) CHECK(b == 0.0);

  cfg.train_projection_biases = true;
  TrainResult trained = train(ds, teacher, cfg);
  ProjectionPair init = ProjectionPair::seeded(16, cfg.manifold_dim,
                                               cfg.kernel_width, cfg.seed);
  bool any_moved = trained.projections.conv_bias != init.conv_bias;
  for (std::size_t i = 0; i < init.mlp_bias.size(); ++i) {
    any_moved = any_moved || trained.projections.mlp_bias[i] != init.mlp_bias[i];
  }
  CHECK(any_moved);
}

TEST_CASE("teacher-initialized student keeps kd at zero when omega is off") {
  SyntheticDataset ds = generate(bench_geometry(), 4, 2);
  TeacherModel teacher = make_prototype_teacher(ds);
  TrainConfig cfg;
  cfg.omega = 0.0;
  cfg.epochs = 5;
  cfg.student_init = StudentInit::kTeacher;
  cfg.logit_temperature = teacher.teacher_temperature;
  TrainResult result = train(ds, teacher, cfg);
  for (const StepRecord& s : result.trace.steps) {
    CHECK(s.kd <= 1e-8);
  }
}

TEST_CASE("default training decreases both the total and the entropy") {
  SyntheticDataset ds = generate(bench_geometry(), 16, 1);
  TeacherModel teacher = make_prototype_teacher(ds);
  TrainConfig cfg;
  TrainResult result = train(ds, teacher, cfg);
  const StepRecord& first = result.trace.steps.front();
  const StepRecord& last = result.trace.steps.back();
  CHECK(last.total < first.total);
  CHECK(last.entropy < first.entropy);
}

TEST_CASE("loss identity holds at every recorded step") {
  SyntheticDataset ds = generate(bench_geometry(), 8, 3);
  TeacherModel teacher = make_prototype_teacher(ds);
  TrainConfig cfg;
  cfg.epochs = 5;
  TrainResult result = train(ds, teacher, cfg);
  for (const StepRecord& s : result.trace.steps) {
    CHECK(std::abs(s.total - (s.kd + cfg.omega * s.entropy)) <= 1e-9);
  }
}

TEST_CASE("training is deterministic") {
  SyntheticDataset ds = generate(bench_geometry(), 8, 4);
  TeacherModel teacher = make_prototype_teacher(ds);
  TrainConfig cfg;
  cfg.epochs = 4;
  TrainResult a = train(ds, teacher, cfg);
  TrainResult b = train(ds, teacher, cfg);
  CHECK(a.student.texts.data == b.student.texts.data);
  CHECK(a.projections.flatten() == b.projections.flatten());
  REQUIRE(a.trace.steps.size() == b.trace.steps.size());
  for (std::size_t i = 0; i < a.trace.steps.size(); ++i) {
    CHECK(a.trace.steps[i].total == b.trace.steps[i].total);
    CHECK(a.trace.steps[i].kd == b.trace.steps[i].kd);
    CHECK(a.trace.steps[i].entropy == b.trace.steps[i].entropy);
  }
}

TEST_CASE("non-finite loss raises DivergenceError with the step report") {
  SyntheticDataset ds = generate(bench_geometry(), 4, 5);
  TeacherModel teacher = make_prototype_teacher(ds);
  TrainConfig cfg;
  cfg.omega = 1e308;  // the entropy term overflows the total on the first step
  try {
    train(ds, teacher, cfg);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(e.step() == 0);
    CHECK(std::isfinite(e.kd()));
    CHECK(std::isfinite(e.entropy()));
    CHECK_FALSE(std::isfinite(e.total()));
  }
}

TEST_CASE("trace CSV carries the full per-step schema") {
  SyntheticDataset ds = generate(bench_geometry(), 4, 7);
  TeacherModel teacher = make_prototype_teacher(ds);
  TrainConfig cfg;
  cfg.epochs = 2;
  TrainResult result = train(ds, teacher, cfg);
  std::ostringstream os;
  result.trace.write_csv(os);
  const std::string csv = os.str();
  CHECK(csv.rfind("step,epoch,kd,entropy,total,grad_angle_deg,zeta_hat\n", 0) == 0);
  std::size_t lines = 0;
  for (char ch : csv) {
    if (ch == '\n') ++lines;
  }
  CHECK(lines == 1 + result.trace.steps.size());
}

TEST_CASE("student checkpoint JSON round-trip is exact") {
  StudentModel s = StudentModel::seeded(5, 12, 9, 0.07);
  StudentModel back = student_from_json(student_to_json(s));
  CHECK(back.texts.data == s.texts.data);
  CHECK(back.logit_temperature == s.logit_temperature);
  CHECK_THROWS_AS(student_from_json("{"), InvalidArgument);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = TrainConfig{};
  cfg.kd_temperature = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = TrainConfig{};
  cfg.kernel_width = 4;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = TrainConfig{};
  cfg.omega = -1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);

  // Identity projections demand a matching manifold width.
  SyntheticDataset ds = generate(bench_geometry(), 2, 1);
  TeacherModel teacher = make_prototype_teacher(ds);
  TrainConfig ident;
  ident.identity_projections = true;
  ident.manifold_dim = 8;  // embed_dim is 16
  ident.epochs = 1;
  CHECK_THROWS_AS(train(ds, teacher, ident), InvalidArgument);
}
