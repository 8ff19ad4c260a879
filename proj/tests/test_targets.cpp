#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stnce/targets.hpp"
#include "test_support.hpp"

using namespace stnce;

namespace {

GmmTarget two_component_1d() {
  Vec w(2);
  w << 0.3, 0.7;
  Mat m(1, 2), s(1, 2);
  m << -1.0, 2.0;
  s << 0.5, 1.5;
  return GmmTarget(w, m, s);
}

GmmTarget skewed_2d() {
  Vec w(3);
  w << 0.2, 0.5, 0.3;
  Mat m(2, 3), s(2, 3);
  m << -1.0, 0.5, 2.0, 0.3, -0.7, 1.1;
  s << 0.4, 0.9, 0.2, 0.6, 0.3, 0.5;
  return GmmTarget(w, m, s);
}

}  // namespace

TEST_CASE("invalid mixtures are rejected") {
  Mat m = Mat::Zero(1, 2), s = Mat::Ones(1, 2);
  CHECK_THROWS_AS(GmmTarget(Vec::Constant(2, 0.4), m, s), ConfigError);
  Vec w(2);
  w << 0.5, 0.5;
  s(0, 1) = 0.0;
  CHECK_THROWS_AS(GmmTarget(w, m, s), ConfigError);
}

TEST_CASE("sampling moments and degenerate weights") {
  Rng rng(1);
  GmmTarget g = GmmTarget::gaussian(Vec::Zero(2), 1.0);
  const int n = 100000;
  Points x = sample_target(g, n, rng);
  CHECK(std::abs(x.row(0).mean()) < 4.0 / std::sqrt(n));
  CHECK(std::abs(x.row(1).mean()) < 4.0 / std::sqrt(n));

  Vec w(2);
  w << 1.0, 0.0;
  Mat m(1, 2);
  m << -50.0, 50.0;
  GmmTarget one(w, m, Mat::Ones(1, 2));
  Points y = sample_target(one, 1000, rng);
  CHECK(y.maxCoeff() < 0.0);

  Rng a(9), b(9);
  CHECK(sample_target(skewed_2d(), 50, a) == sample_target(skewed_2d(), 50, b));
}

TEST_CASE("log density matches direct summation") {
  const GmmTarget g = two_component_1d();
  InterpolantMarginal ref(g, 0.0);
  CHECK(ref.log_density(Vec::Zero(1)) == doctest::Approx(-0.9189385332046727).epsilon(1e-14));
  InterpolantMarginal p1(g, 1.0);
  CHECK(p1.log_density(Vec::Constant(1, 0.4)) == doctest::Approx(-2.2058947409041862).epsilon(1e-13));
  CHECK(p1.log_density(Vec::Constant(1, -2.5)) == doctest::Approx(-5.354400012067102).epsilon(1e-13));

  Vec w(2);
  w << 0.5, 0.5;
  Mat m(1, 2);
  m << -1.3, 1.3;
  GmmTarget sym = GmmTarget::isotropic(w, m, 0.4);
  for (double t : {0.2, 0.7, 1.0}) {
    InterpolantMarginal p(sym, t);
    for (double x : {0.1, 0.8, 2.5}) {
      CHECK(p.log_density(Vec::Constant(1, x)) == doctest::Approx(p.log_density(Vec::Constant(1, -x))).epsilon(1e-14));
    }
  }
}

TEST_CASE("marginal integrates to one") {
  const GmmTarget g = two_component_1d();
  for (double t : {0.0, 0.3, 0.9, 1.0}) {
    InterpolantMarginal p(g, t);
    const double lo = -20, hi = 20;
    const int n = 40000;
    const double h = (hi - lo) / n;
    double s = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double f = std::exp(p.log_density(Vec::Constant(1, lo + i * h)));
      s += (i == 0 || i == n) ? 0.5 * f : f;
    }
    CHECK(std::abs(s * h - 1.0) < 1e-6);
  }
}

TEST_CASE("interpolated sample moments match the closed form") {
  GmmTarget g = two_component_1d();
  const int n = 100000;
  for (double t : {0.2, 0.5, 0.8}) {
    Rng rng(static_cast<std::uint64_t>(t * 100));
    InterpolantMarginal p(g, t);
    Points x = p.sample(n, rng);
    const double mean = p.mean()[0], var = p.variance()[0];
    const double emp_mean = x.mean();
    const double emp_var = (x.array() - emp_mean).square().sum() / (n - 1);
    CHECK(std::abs(emp_mean - mean) < 5 * std::sqrt(var / n));
    // Standard error of the sample variance uses the fourth moment of x_t.
    const double m4 = (x.array() - emp_mean).pow(4).mean();
    CHECK(std::abs(emp_var - var) < 5 * std::sqrt((m4 - var * var) / n));

  }
}

TEST_CASE("scores match finite differences") {
  const GmmTarget g = skewed_2d();
  Rng rng(3);
  const double h = 1e-5;
  for (double t : {0.1, 0.3, 0.5, 0.7, 0.95}) {
    InterpolantMarginal p(g, t);
    InterpolantMarginal pp(g, t + h), pm(g, t - h);
    Points x = p.sample(50, rng);
    Points batch = p.space_score_batch(x);
    for (int j = 0; j < 50; ++j) {
      Vec xj = x.col(j);
      Vec s = p.space_score(xj);
      CHECK((s - batch.col(j)).cwiseAbs().maxCoeff() < 1e-14);
      for (int i = 0; i < 2; ++i) {
        Vec a = xj, b = xj;
        a[i] += h;
        b[i] -= h;
        const double fd = (p.log_density(a) - p.log_density(b)) / (2 * h);
        CHECK(testing::rel_err(fd, s[i]) < 1e-5);
      }
      const double fdt = (pp.log_density(xj) - pm.log_density(xj)) / (2 * h);
      CHECK(testing::rel_err(fdt, p.time_score(xj)) < 1e-5);
    }
  }
}

TEST_CASE("single Gaussian score and dominant-mode tail") {
  GmmTarget g = GmmTarget::gaussian(Vec::Constant(1, 0.5), 0.8);
  InterpolantMarginal p(g, 1.0);
  CHECK(p.space_score(Vec::Constant(1, 2.0))[0] == doctest::Approx(-(2.0 - 0.5) / 0.64).epsilon(1e-14));

  Vec w(2);
  w << 0.5, 0.5;
  Mat m(1, 2);
  m << 0.0, 10.0;
  GmmTarget far = GmmTarget::isotropic(w, m, 1.0);
  InterpolantMarginal q(far, 1.0);
  CHECK(q.space_score(Vec::Constant(1, -1.0))[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("score domain errors") {
  const GmmTarget g = two_component_1d();
  InterpolantMarginal p0(g, 0.0);
  CHECK_THROWS_AS(p0.space_score(Vec::Zero(1)), DomainError);
  InterpolantMarginal p1(g, 1.0);
  CHECK_THROWS_AS(p1.time_score(Vec::Zero(1)), DomainError);
  CHECK_THROWS_AS(InterpolantMarginal(g, 1.5), DomainError);
}

TEST_CASE("per-point marginal helpers agree with the fixed-time marginal") {
  GmmTarget g = skewed_2d();
  Rng rng(4);
  Points x = testing::random_points(2, 20, rng);
  Vec t = testing::random_times(20, rng);
  Vec lp = marginal_log_density(g, x, t);
  Points s = marginal_space_score(g, x, t);
  for (int j = 0; j < 20; ++j) {
    InterpolantMarginal p(g, t[j]);
    CHECK(lp[j] == doctest::Approx(p.log_density(Vec(x.col(j)))).epsilon(1e-14));
    CHECK((s.col(j) - p.space_score(Vec(x.col(j)))).norm() < 1e-12);
  }
}

TEST_CASE("failure-mode scores and grid") {
  FailureScores a = failure_scores(-0.9, 0.9, 0.01);
  CHECK(a.multimodality == doctest::Approx(0.989010989010989).epsilon(1e-14));
  CHECK(failure_scores(0.3, 0.3, 0.01).multimodality == 0.0);
  CHECK(failure_scores(-3.0, -3.0, 0.01).mismatch == 1.0);
  CHECK(failure_scores(-0.5, 0.5, 0.01).mismatch == doctest::Approx(0.0));

  const auto& grid = failure_mode_grid();
  REQUIRE(grid.size() == 25);
  CHECK(grid[0].mu1 == -0.90);
  CHECK(grid[9].mu1 == -1.07);
  CHECK(grid[9].mu2 == 1.42);
  CHECK(grid[14].mu1 == -2.29);
  CHECK(grid[24].mu2 == -1.07);
  GmmTarget t = failure_mode_target(grid[4]);
  CHECK(t.stds()(0, 0) == kFailureComponentStd);
  CHECK(t.weights()[0] == 0.5);
}

TEST_CASE("random mixtures are seed-determined") {
  GmmTarget a = GmmTarget::random(20, 10, 0.1, 1), b = GmmTarget::random(20, 10, 0.1, 1);
  CHECK(a.means() == b.means());
  CHECK(a.components() == 20);
  CHECK(a.dim() == 10);
  CHECK(std::abs(a.weights().sum() - 1.0) < 1e-12);
}
