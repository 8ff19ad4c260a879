#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stnce/losses.hpp"
#include "stnce/network.hpp"
#include "stnce/pairs.hpp"
#include "stnce/parametric.hpp"
#include "test_support.hpp"

using namespace stnce;

namespace {

EnergyNetwork tiny_net(int dim, std::uint64_t seed) {
  Architecture a;
  a.input_dim = dim;
  a.time_embed_dim = 4;
  a.hidden_dim = 5;
  a.expansion_dim = 6;
  a.n_blocks = 1;
  a.time_max_freq = 10.0;
  Rng rng(seed);
  EnergyNetwork net(a, rng);
  for (double& p : net.parameters()) p += 0.2 * rng.normal();
  return net;
}

PairBatch batch_for(const LossSpec& spec, const GmmTarget& g, const EnergyModel& model, Scheme scheme, int n,
                    Rng& rng) {
  ScoreFn score = spec.kernel.score_source == ScoreSource::kSelf ? self_score(model) : oracle_score(g);
  return sample_pairs(scheme, g, spec.kernel, n, rng, score);
}

}  // namespace

TEST_CASE("logistic loss values") {
  CHECK(logistic_loss(Vec::Zero(3), Vec::Zero(5)) == doctest::Approx(kTwoLog2).epsilon(1e-15));
  CHECK(kTwoLog2 == doctest::Approx(1.3862943611198906));
  const double a_only = logistic_loss(Vec::Constant(1, std::log(3.0)), Vec::Constant(1, -1e9));
  CHECK(a_only == doctest::Approx(std::log(4.0 / 3.0)).epsilon(1e-14));
  CHECK(logistic_loss(Vec::Constant(2, 800.0), Vec::Constant(2, -800.0)) == doctest::Approx(0.0));
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    Vec a = testing::random_points(4, 1, rng, 5.0).col(0), b = testing::random_points(3, 1, rng, 5.0).col(0);
    CHECK(logistic_loss(a, b) >= 0.0);
  }
}

TEST_CASE("minimizer of the logistic loss is the log density ratio") {
  // Two-point toy: p_A = (0.3, 0.7), p_B = (0.6, 0.4), encoded by replication.
  auto loss = [](double f1, double f2) {
    Vec a(10), b(10);
    a << Vec::Constant(3, f1), Vec::Constant(7, f2);
    b << Vec::Constant(6, f1), Vec::Constant(4, f2);
    return logistic_loss(a, b);
  };
  double best = 1e300, b1 = 0, b2 = 0;
  for (double f1 = -2.0; f1 <= 2.0; f1 += 1e-3)
    if (const double v = loss(f1, 0.0); v < best) best = v, b1 = f1;
  best = 1e300;
  for (double f2 = -2.0; f2 <= 2.0; f2 += 1e-3)
    if (const double v = loss(b1, f2); v < best) best = v, b2 = f2;
  CHECK(std::abs(b1 - std::log(0.3 / 0.6)) < 1e-3);
  CHECK(std::abs(b2 - std::log(0.7 / 0.4)) < 1e-3);
}

TEST_CASE("near-zero expansion of the logistic loss") {
  Rng rng(2);
  Vec a0 = testing::random_points(50, 1, rng).col(0), b0 = testing::random_points(50, 1, rng).col(0);
  auto remainder = [&](double eps) {
    Vec a = eps * a0, b = eps * b0;
    const double quad = kTwoLog2 - 0.5 * (a.mean() - b.mean()) + 0.125 * (a.squaredNorm() / 50 + b.squaredNorm() / 50);
    return std::abs(logistic_loss(a, b) - quad);
  };
  // softplus(x) - x/2 is even, so the remainder is fourth order.
  CHECK(remainder(1e-2) < 1e-8);
  CHECK(remainder(1e-2) / remainder(5e-3) > 8.0);
}

TEST_CASE("logit conventions") {
  EnergyNetwork net = tiny_net(2, 3);
  PerturbationKernel white;
  white.kind = KernelKind::kWhite;
  Vec x = Vec::Constant(2, 0.4), xp = Vec::Constant(2, -0.1);
  CHECK(stnce_logit(net, x, 0.3, x, 0.3, white, {}) == 0.0);
  CHECK(stnce_logit(net, x, 0.3, xp, 0.6, white, {}) ==
        doctest::Approx(-net.potential_at(x, 0.3) + net.potential_at(xp, 0.6)).epsilon(1e-14));
}

TEST_CASE("method and kernel compatibility") {
  for (Method m : all_methods()) {
    LossSpec s = LossSpec::for_method(m);
    CHECK_NOTHROW(s.validate());
    CHECK(parse_method(to_string(m)) == m);
  }
  LossSpec s = LossSpec::for_method(Method::kStnceS);
  CHECK(s.kernel.kind == KernelKind::kForwardReverse);
  CHECK(s.kernel.score_source == ScoreSource::kSelf);
  CHECK(s.needs_self_score());
  s.kernel.score_source = ScoreSource::kOracle;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  LossSpec w = LossSpec::for_method(Method::kTnce);
  w.kernel.kind = KernelKind::kWhite;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  CHECK_THROWS_AS(parse_method("dsm"), ConfigError);
}

TEST_CASE("special cases reduce to their closed forms") {
  EnergyNetwork net = tiny_net(2, 4);
  const GmmTarget g = GmmTarget::random(3, 2, 0.3, 2);
  Rng rng(5);
  for (Method m : {Method::kNce, Method::kTnce, Method::kTcnce}) {
    for (double sigma_time : {-1.0, 0.1}) {
      PerturbationKernel base;
      base.proposal.sigma_time = sigma_time;
      base.sigma_white = 0.3;
      LossSpec spec = LossSpec::for_method(m, base);
      PairBatch b = batch_for(spec, g, net, Scheme::kDefault, 1000, rng);
      double worst = 0.0;
      for (Eigen::Index i = 0; i < b.size(); ++i) {
        SpecialCaseLogits l = reduce_to_special_case(m, net, b, i, spec.kernel);
        worst = std::max(worst, std::abs(l.generic - l.specific));
      }
      CHECK(worst < 1e-12);
    }
  }
  PairBatch wrong = sample_pairs_default(g, LossSpec::for_method(Method::kStnceW).kernel, 3, rng);
  CHECK_THROWS_AS(reduce_to_special_case(Method::kTnce, net, wrong, 0, PerturbationKernel{}), ContractError);
}

TEST_CASE("mixture loss decomposes into its time and space parts") {
  EnergyNetwork net = tiny_net(2, 6);
  const GmmTarget g = GmmTarget::random(3, 2, 0.3, 3);
  Rng rng(7);
  LossSpec mix = LossSpec::for_method(Method::kStnceM);
  PairBatch b = sample_pairs_default(g, mix.kernel, 2000, rng);
  PairBatch tb = b.select(Branch::kTimeOnly), sb = b.select(Branch::kSpaceOnly);
  const double lt = loss_value(LossSpec::for_method(Method::kTnce, mix.kernel), net, tb);
  const double ls = loss_value(LossSpec::for_method(Method::kTcnce, mix.kernel), net, sb);
  const double n = static_cast<double>(b.size());
  CHECK(loss_value(mix, net, b) == doctest::Approx(tb.size() / n * lt + sb.size() / n * ls).epsilon(1e-12));

  // Equal counts give the half/half form.
  const Eigen::Index m = std::min(tb.size(), sb.size());
  PairBatch eq = tb.slice(0, m);
  PairBatch sm = sb.slice(0, m);
  PairBatch both;
  both.x.resize(2, 2 * m);
  both.xp.resize(2, 2 * m);
  both.x << eq.x, sm.x;
  both.xp << eq.xp, sm.xp;
  both.t.resize(2 * m);
  both.tp.resize(2 * m);
  both.t << eq.t, sm.t;
  both.tp << eq.tp, sm.tp;
  both.correction.resize(2 * m);
  both.correction << eq.correction, sm.correction;
  both.branch = eq.branch;
  both.branch.insert(both.branch.end(), sm.branch.begin(), sm.branch.end());
  const double half = 0.5 * loss_value(LossSpec::for_method(Method::kTnce, mix.kernel), net, eq) +
                      0.5 * loss_value(LossSpec::for_method(Method::kTcnce, mix.kernel), net, sm);
  CHECK(std::abs(loss_value(mix, net, both) - half) < 1e-10);
}

TEST_CASE("every loss gradient matches finite differences") {
  const GmmTarget g = GmmTarget::random(2, 2, 0.4, 4);
  for (Method m : all_methods()) {
    for (Scheme scheme : {Scheme::kDefault, Scheme::kReuse}) {
      EnergyNetwork net = tiny_net(2, 8);
      PerturbationKernel base;
      base.proposal.sigma_time = 0.1;
      LossSpec spec = LossSpec::for_method(m, base);
      Rng rng(9);
      // Self-score corrections are computed once and then held fixed: the stop-gradient contract.
      PairBatch b = batch_for(spec, g, net, scheme, 16, rng);
      std::vector<double> grad(net.num_parameters());
      const double l = loss_and_gradient(spec, net, b, grad);
      CHECK(l == doctest::Approx(loss_value(spec, net, b)).epsilon(1e-13));
      const double err = testing::fd_check(net.parameters(), [&] { return loss_value(spec, net, b); }, grad);
      INFO(to_string(m), " ", to_string(scheme));
      CHECK(err < 1e-5);
    }
  }
}

TEST_CASE("self-score corrections depend on parameters but carry no gradient") {
  const GmmTarget g = GmmTarget::gaussian(Vec::Zero(2), 0.7);
  EnergyNetwork net = tiny_net(2, 10);
  LossSpec spec = LossSpec::for_method(Method::kStnceS);
  Rng r1(11);
  PairBatch b = batch_for(spec, g, net, Scheme::kDefault, 32, r1);
  std::vector<double> grad(net.num_parameters());
  loss_and_gradient(spec, net, b, grad);

  // Only the score (and hence the correction) sees a change in the last hidden weights via dU/dx;
  // the gradient is the fixed-correction derivative regardless.
  const Vec before = kernel_log_ratio(spec.kernel, b.x, b.t, b.xp, b.tp, b.branch, self_score(net));
  CHECK((before - b.correction).cwiseAbs().maxCoeff() < 1e-12);
  net.tensor("input.weight")(0, 0) += 0.05;
  const Vec after = kernel_log_ratio(spec.kernel, b.x, b.t, b.xp, b.tp, b.branch, self_score(net));
  CHECK((after - before).cwiseAbs().maxCoeff() > 1e-6);
  net.tensor("input.weight")(0, 0) -= 0.05;
  const double err = testing::fd_check(net.parameters(), [&] { return loss_value(spec, net, b); }, grad);
  CHECK(err < 1e-5);
}

TEST_CASE("RNE residual vanishes at the truth and is linear in the energy") {
  const GmmTarget g = GmmTarget::gaussian(Vec::Constant(1, 0.5), 0.8);
  GaussianEnergyModel truth(0.5, std::log(0.8));
  LossSpec spec = LossSpec::for_method(Method::kRneO);
  spec.kernel.proposal.sigma_time = 1e-3;
  Rng rng(12);
  PairBatch all = sample_pairs_reuse(g, spec.kernel, 20000, rng, oracle_score(g));
  // The 1/t^2 factors of the denoising step dominate the residual below t = 0.1.
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < all.size(); ++i)
    if (std::min(all.t[i], all.tp[i]) >= 0.1) keep.push_back(i);
  PairBatch b;
  b.x.resize(1, static_cast<Eigen::Index>(keep.size()));
  b.xp.resize(1, b.x.cols());
  b.t.resize(b.x.cols());
  b.tp.resize(b.x.cols());
  b.correction.resize(b.x.cols());
  for (Eigen::Index j = 0; j < b.x.cols(); ++j) {
    const Eigen::Index i = keep[static_cast<std::size_t>(j)];
    b.x(0, j) = all.x(0, i);
    b.xp(0, j) = all.xp(0, i);
    b.t[j] = all.t[i];
    b.tp[j] = all.tp[i];
    b.correction[j] = all.correction[i];
    b.branch.push_back(all.branch[static_cast<std::size_t>(i)]);
  }
  CHECK(loss_value(spec, truth, b) < 1e-4);

  OracleModel oracle(g);
  CHECK(loss_value(spec, oracle, b) == doctest::Approx(loss_value(spec, truth, b)).epsilon(1e-8));

  PairBatch zero = b;
  zero.correction.setZero();
  Architecture a;
  a.input_dim = 1;
  a.hidden_dim = 3;
  a.expansion_dim = 3;
  a.time_embed_dim = 2;
  a.n_blocks = 1;
  EnergyNetwork flat(a);
  flat.tensor("output.bias") << 2.5;
  CHECK(loss_value(spec, flat, zero) == 0.0);

  EnergyNetwork net = tiny_net(1, 13);
  const Vec e = stnce_logits(net, zero);
  EnergyNetwork doubled = net;
  doubled.tensor("output.weight") *= 2.0;
  doubled.tensor("output.bias") *= 2.0;
  CHECK((stnce_logits(doubled, zero) - 2.0 * e).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("small-step limit diagnostic") {
  LimitConfig cfg;
  cfg.samples = 200000;
  Rng rng(14);
  std::vector<LimitRow> rows = limit_diagnostic_sde(cfg, {2e-3, 1e-3}, rng);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) CHECK(r.ratio() == doctest::Approx(1.0).epsilon(0.15));
  CHECK(rows[1].excess / rows[0].excess == doctest::Approx(0.5).epsilon(0.15));

  cfg.amplitude = 0.0;
  std::vector<LimitRow> zero = limit_diagnostic_sde(cfg, {1e-3}, rng);
  CHECK(std::abs(zero[0].excess) <= 3 * zero[0].excess_se + 1e-15);
}
