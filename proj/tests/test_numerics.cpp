#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "ame/error.hpp"
#include "ame/numerics.hpp"
#include "ame/rng.hpp"
#include "doctest.h"

using namespace ame;

TEST_CASE("softmax symmetry and frozen values") {
  std::vector<double> flat{0.0, 0.0, 0.0, 0.0};
  ProbVector p = softmax(flat, 1.0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx(0.25).epsilon(1e-12));

  std::vector<double> two{1.0, 0.0};
  ProbVector q = softmax(two, 2.0);
  // exp(0.5) / (exp(0.5) + 1)
  CHECK(q[0] == doctest::Approx(0.6224593312018546).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(0.3775406687981454).epsilon(1e-12));
}

TEST_CASE("softmax survives extreme logits via max subtraction") {
  std::vector<double> z{1000.0, 0.0};
  ProbVector p = softmax(z, 1.0);
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(p[1] == doctest::Approx(0.0).epsilon(1e-300));
  CHECK(p.valid());
}

TEST_CASE("softmax rejects bad input") {
  std::vector<double> z{1.0, 2.0};
  CHECK_THROWS_AS(softmax(z, 0.0), InvalidArgument);
  CHECK_THROWS_AS(softmax(z, -1.0), InvalidArgument);
  std::vector<double> bad{1.0, std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(softmax(bad, 1.0), InvalidArgument);
  CHECK_THROWS_AS(softmax(std::vector<double>{}, 1.0), InvalidArgument);
}

TEST_CASE("softmax shift invariance") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> z(6);
    for (double& v : z) v = rng.uniform(-4.0, 4.0);
    std::vector<double> shifted = z;
    const double c = rng.uniform(-10.0, 10.0);
    for (double& v : shifted) v += c;
    ProbVector a = softmax(z, 1.0);
    ProbVector b = softmax(shifted, 1.0);
    for (std::size_t i = 0; i < z.size(); ++i) {
      CHECK(std::abs(a[i] - b[i]) <= 1e-12);
    }
  }
}

TEST_CASE("softmax sums to one within 1e-9") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> z(1 + rng.index(8));
    for (double& v : z) v = rng.uniform(-30.0, 30.0);
    ProbVector p = softmax(z, rng.uniform(0.05, 4.0));
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) sum += p[i];
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("entropy frozen values and bounds") {
  CHECK(entropy(ProbVector{{1.0, 0.0, 0.0}}) == doctest::Approx(0.0));
  CHECK(entropy(ProbVector{{0.25, 0.25, 0.25, 0.25}}) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  // 0.5 ln 2 + 0.5 ln 4
  CHECK(entropy(ProbVector{{0.5, 0.25, 0.25}}) ==
        doctest::Approx(1.0397207708399179).epsilon(1e-12));

  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> z(2 + rng.index(7));
    for (double& v : z) v = rng.uniform(-5.0, 5.0);
    ProbVector p = softmax(z, 1.0);
    double h = entropy(p);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(static_cast<double>(p.size())) + 1e-12);
  }
}

TEST_CASE("entropy of tempered softmax is non-increasing as temperature drops") {
  const std::vector<double> taus{4.0, 2.0, 1.0, 0.5, 0.25};
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> z(5);
    for (double& v : z) v = rng.uniform(-2.0, 2.0);
    z[0] += 0.5;  // keep it non-constant
    double prev = std::numeric_limits<double>::infinity();
    for (double tau : taus) {
      double h = entropy(softmax(z, tau));
      CHECK(h <= prev + 1e-12);
      prev = h;
    }
  }
}

TEST_CASE("kl_div frozen values") {
  ProbVector half{{0.5, 0.5}};
  CHECK(kl_div(half, half) == 0.0);

  ProbVector p{{0.6224593312018546, 0.3775406687981454}};
  ProbVector q{{0.3775406687981454, 0.6224593312018546}};
  // closed form (2a-1) ln(a/(1-a)) at a = sigma(0.5)
  CHECK(kl_div(p, q) == doctest::Approx(0.12245933120185457).epsilon(1e-12));

  ProbVector onehot{{1.0, 0.0}};
  ProbVector uniform{{0.5, 0.5}};
  CHECK(kl_div(onehot, uniform) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  CHECK_THROWS_AS(kl_div(onehot, ProbVector{{1.0, 0.0, 0.0}}), InvalidArgument);
}

TEST_CASE("kl_div nonnegative on random pairs, zero iff equal") {
  Rng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> a(4);
    std::vector<double> b(4);
    for (double& v : a) v = rng.uniform(-3.0, 3.0);
    for (double& v : b) v = rng.uniform(-3.0, 3.0);
    ProbVector p = softmax(a, 1.0);
    ProbVector q = softmax(b, 1.0);
    double d = kl_div(p, q);
    CHECK(d >= 0.0);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      max_diff = std::max(max_diff, std::abs(p[i] - q[i]));
    }
    if (max_diff <= 1e-12) {
      CHECK(d == 0.0);
    } else if (d == 0.0) {
      CHECK(max_diff <= 1e-12);
    }
  }
}

TEST_CASE("cosine_sim analytic cases") {
  std::vector<double> a{3.0, 4.0};
  CHECK(cosine_sim(a, a) == doctest::Approx(1.0));
  std::vector<double> e0{1.0, 0.0};
  std::vector<double> e1{0.0, 1.0};
  CHECK(cosine_sim(e0, e1) == doctest::Approx(0.0));
  std::vector<double> diag{1.0, 1.0};
  CHECK(cosine_sim(e0, diag) == doctest::Approx(0.7071067811865475).epsilon(1e-12));

  std::vector<double> zero{0.0, 0.0};
  CHECK_THROWS_AS(cosine_sim(zero, e0), InvalidArgument);
  std::vector<double> longer{1.0, 0.0, 0.0};
  CHECK_THROWS_AS(cosine_sim(e0, longer), InvalidArgument);
}

TEST_CASE("finite_diff_grad is exact on quadratics") {
  auto f = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  };
  std::vector<double> grad = finite_diff_grad(f, {1.0, 2.0});
  CHECK(grad[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(grad[1] == doctest::Approx(4.0).epsilon(1e-8));
}

TEST_CASE("finite_diff_grad of entropy of softmax vanishes at the uniform point") {
  auto f = [](const std::vector<double>& x) { return entropy(softmax(x, 1.0)); };
  std::vector<double> grad = finite_diff_grad(f, {0.3, 0.3, 0.3, 0.3});
  for (double g : grad) CHECK(std::abs(g) <= 1e-6);
}

TEST_CASE("finite_diff_grad names the failing component") {
  auto f = [](const std::vector<double>& x) { return std::log(x[1]); };
  try {
    finite_diff_grad(f, {1.0, 1e-9});
    FAIL("expected NumericFailure");
  } catch (const NumericFailure& e) {
    CHECK(e.component() == 1);
  }
}

TEST_CASE("matrix finiteness check") {
  Matrix m(2, 2, 1.0);
  CHECK(m.all_finite());
  m.at(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_FALSE(m.all_finite());
}
