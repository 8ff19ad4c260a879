#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stnce/interpolant.hpp"
#include "stnce/kernels.hpp"
#include "stnce/pairs.hpp"
#include "test_support.hpp"

using namespace stnce;

TEST_CASE("fold") {
  CHECK(fold(1.2) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(fold(-0.3) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(fold(0.5) == 0.5);
  CHECK(fold(-2.25) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(fold(3.0) == doctest::Approx(1.0));
  for (double u = -7.3; u < 7.3; u += 0.137) {
    const double f = fold(u);
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
  }
}

TEST_CASE("interpolate") {
  Points x0 = Points::Zero(2, 1), x1 = Points::Ones(2, 1);
  CHECK(interpolate(x0, x1, 0.0) == x0);
  CHECK(interpolate(x0, x1, 1.0) == x1);
  CHECK(interpolate(x0, x1, 0.25)(1, 0) == 0.25);
  Points a = Points::Random(3, 5), b = Points::Random(3, 5);
  CHECK((interpolate(a, b, 0.3) - (0.7 * a + 0.3 * b)).norm() < 1e-15);
}

TEST_CASE("folded proposal keeps the uniform marginal") {
  for (double sigma : {0.01, 0.1}) {
    TimeProposal p{sigma, 1e-3};
    Rng rng(static_cast<std::uint64_t>(sigma * 1000));
    std::vector<double> tp(100000);
    for (double& v : tp) v = p.sample(rng.uniform(), rng);
    CHECK(testing::ks_uniform(tp) < 0.01);
  }
}

TEST_CASE("wrapped proposal density is symmetric and normalized") {
  Rng rng(2);
  for (double sigma : {0.01, 0.1, 0.5}) {
    TimeProposal p{sigma, 1e-3};
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const double t = rng.uniform();
      const double tp = sigma < 0.05 ? fold(t + sigma * rng.normal()) : rng.uniform();
      const double a = p.density(t, tp), b = p.density(tp, t);
      worst = std::max(worst, std::abs(a - b) / std::max(a, b));
    }
    CHECK(worst < 1e-10);
    const int n = 20000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += p.density(0.37, (i + 0.5) / n) / n;
    CHECK(s == doctest::Approx(1.0).epsilon(sigma < 0.05 ? 1e-3 : 1e-6));
  }
  CHECK(TimeProposal{}.density(0.2, 0.9) == 1.0);
}

TEST_CASE("invalid proposals") {
  CHECK_THROWS_AS((TimeProposal{0.0, 1e-3}.validate()), ConfigError);
  CHECK_THROWS_AS((TimeProposal{0.1, -1.0}.validate()), ConfigError);
  CHECK_THROWS_AS(parse_scheme("both"), ConfigError);
  CHECK(parse_scheme(to_string(Scheme::kReuse)) == Scheme::kReuse);
}

TEST_CASE("default pairs: shape, ranges and uniform t'") {
  const GmmTarget g = GmmTarget::random(4, 3, 0.3, 5);
  PerturbationKernel k;
  k.kind = KernelKind::kWhite;
  Rng rng(11);
  PairBatch b = sample_pairs_default(g, k, 4, rng);
  CHECK(b.size() == 4);
  CHECK(b.x.rows() == 3);
  CHECK(b.t.minCoeff() >= 0.0);
  CHECK(b.tp.maxCoeff() <= 1.0);
  b.check();

  PairBatch big = sample_pairs_default(g, k, 100000, rng);
  std::vector<double> tp(big.tp.data(), big.tp.data() + big.tp.size());
  CHECK(testing::ks_uniform(tp) < 0.01);
  CHECK(big.correction.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("reuse pairs come in antithetic rows with shared noise") {
  // A near-point-mass target exposes the shared noise: x_t / (1 - t) is the same eps in both rows.
  const GmmTarget g = GmmTarget::gaussian(Vec::Zero(2), 1e-12);
  PerturbationKernel k;
  k.kind = KernelKind::kTimeOnly;
  k.proposal.sigma_time = 0.1;
  Rng rng(12);
  PairBatch b = sample_pairs_reuse(g, k, 2, rng);
  REQUIRE(b.size() == 4);
  CHECK(b.scheme == Scheme::kReuse);
  for (int i = 0; i < 4; i += 2) {
    CHECK(b.t[i] == b.tp[i + 1]);
    CHECK(b.tp[i] == b.t[i + 1]);
    CHECK(b.x.col(i) == b.xp.col(i));
    CHECK((b.x.col(i) / (1 - b.t[i]) - b.x.col(i + 1) / (1 - b.t[i + 1])).norm() < 1e-9);
  }

  PairBatch big = sample_pairs_reuse(g, k, 50000, rng);
  std::vector<double> t(big.t.data(), big.t.data() + big.t.size());
  std::vector<double> tp(big.tp.data(), big.tp.data() + big.tp.size());
  CHECK(testing::ks_uniform(t) < 0.01);
  CHECK(testing::ks_uniform(tp) < 0.01);
}

TEST_CASE("forward-reverse reuse respects the time floor and gap") {
  const GmmTarget g = GmmTarget::gaussian(Vec::Zero(1), 0.8);
  PerturbationKernel k;
  k.kind = KernelKind::kForwardReverse;
  k.proposal.sigma_time = 0.01;
  Rng rng(13);
  PairBatch b = sample_pairs_reuse(g, k, 5000, rng, oracle_score(g));
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    CHECK(std::min(b.t[i], b.tp[i]) >= k.t_min);
    CHECK(std::abs(b.t[i] - b.tp[i]) >= k.proposal.t_min_gap);
  }
  // (x1, t1, x0, t0) then (x0, t0, x0', t1): the second row starts where the first ended.
  for (Eigen::Index i = 0; i < b.size(); i += 2) {
    CHECK(b.t[i] > b.tp[i]);
    CHECK(b.xp.col(i) == b.x.col(i + 1));
    CHECK(b.tp[i + 1] == b.t[i]);
  }
}

TEST_CASE("select and slice") {
  const GmmTarget g = GmmTarget::gaussian(Vec::Zero(1), 1.0);
  PerturbationKernel k;
  k.kind = KernelKind::kMixture;
  Rng rng(14);
  PairBatch b = sample_pairs_default(g, k, 1000, rng);
  PairBatch time = b.select(Branch::kTimeOnly), space = b.select(Branch::kSpaceOnly);
  CHECK(time.size() + space.size() == 1000);
  CHECK(std::abs(time.size() - 500) < 100);
  CHECK((space.t - space.tp).cwiseAbs().maxCoeff() == 0.0);
  CHECK((time.x - time.xp).cwiseAbs().maxCoeff() == 0.0);
  PairBatch s = b.slice(10, 5);
  CHECK(s.size() == 5);
  CHECK(s.t[0] == b.t[10]);
}

TEST_CASE("pair sampling is seed-determined") {
  const GmmTarget g = GmmTarget::random(3, 2, 0.2, 1);
  PerturbationKernel k;
  k.kind = KernelKind::kForwardReverse;
  Rng a(5), b(5);
  PairBatch p = sample_pairs_reuse(g, k, 100, a, oracle_score(g));
  PairBatch q = sample_pairs_reuse(g, k, 100, b, oracle_score(g));
  CHECK(p.x == q.x);
  CHECK(p.xp == q.xp);
  CHECK(p.correction == q.correction);
}
