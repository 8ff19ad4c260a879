#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stnce/config.hpp"
#include "stnce/parametric.hpp"
#include "stnce/training.hpp"
#include "test_support.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace stnce;

namespace {

RunConfig gaussian_1d(Method m, long steps) {
  RunConfig c;
  c.target.kind = "gmm";
  c.target.weights = Vec::Ones(1);
  c.target.means = Mat::Constant(1, 1, 0.5);
  c.target.stds = Mat::Constant(1, 1, 0.8);
  c.model.arch.input_dim = 1;
  c.model.arch.hidden_dim = 16;
  c.model.arch.expansion_dim = 32;
  c.model.arch.time_embed_dim = 8;
  c.model.arch.n_blocks = 1;
  c.model.arch.time_max_freq = 100.0;
  c.loss = LossSpec::for_method(m);
  c.batch_size = 64;
  c.steps = steps;
  c.eval_every = steps / 4;
  c.n_val = 512;
  c.n_logz = 2048;
  c.checkpoints = false;
  c.seed = 3;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("Adam steps") {
  AdamConfig cfg;
  std::vector<double> p{0.5, -0.2};
  AdamState s(2);
  adam_step(s, p, std::vector<double>{1.0, 0.0}, cfg);
  CHECK(p[0] - 0.5 == doctest::Approx(-0.0009999999900000003).epsilon(1e-12));
  CHECK(p[1] == -0.2);
  CHECK(s.step == 1);

  std::vector<double> q = p;
  CHECK_THROWS_AS(adam_step(s, p, std::vector<double>{std::nan(""), 0.0}, cfg), NumericError);
  CHECK(p == q);

  cfg.weight_decay = 0.1;
  std::vector<double> w{1.0};
  AdamState sw(1);
  adam_step(sw, w, std::vector<double>{0.0}, cfg);
  CHECK(w[0] == doctest::Approx(1.0 - cfg.lr * 0.1).epsilon(1e-14));
}

TEST_CASE("Adam is invariant to rescaling the loss") {
  AdamConfig cfg;
  cfg.eps = 1e-12;
  std::vector<double> a{0.3, -1.0, 2.0}, b = a;
  AdamState sa(3), sb(3);
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    std::vector<double> g{rng.normal(), rng.normal(), rng.normal()};
    std::vector<double> g2{1000 * g[0], 1000 * g[1], 1000 * g[2]};
    adam_step(sa, a, g, cfg);
    adam_step(sb, b, g2, cfg);
  }
  for (int i = 0; i < 3; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-6);
}

TEST_CASE("EMA warmup schedule") {
  CHECK(ema_effective_decay(0.9999, 0) == doctest::Approx(0.1));
  CHECK(ema_effective_decay(0.9999, 1000000000) == 0.9999);
  CHECK(ema_effective_decay(0.0, 5) == 0.0);
}

TEST_CASE("config validation") {
  RunConfig c = gaussian_1d(Method::kStnceW, 100);
  CHECK_NOTHROW(c.validate());
  c.steps = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = gaussian_1d(Method::kStnceW, 100);
  c.batch_size = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = gaussian_1d(Method::kStnceW, 100);
  c.adam.lr = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("config JSON round trip and rejection of unknown keys") {
  RunConfig c = gaussian_1d(Method::kStnceS, 100);
  c.loss.kernel.proposal.sigma_time = 0.1;
  nlohmann::json j = run_config_to_json(c);
  RunConfig back = run_config_from_json(j);
  CHECK(run_config_to_json(back) == j);
  j["bogus"] = 1;
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  nlohmann::json k = run_config_to_json(c);
  k["kernel"]["score_source"] = "oracle";
  CHECK_THROWS_AS(run_config_from_json(k), ConfigError);
}

TEST_CASE("stnce_w improves NormMSE on a 1-D Gaussian") {
  RunConfig c = gaussian_1d(Method::kStnceW, 2000);
  TrainResult r = train(c);
  REQUIRE_FALSE(r.failed);
  REQUIRE(r.records.size() == 5);
  CHECK(r.records.back().norm_mse < r.records.front().norm_mse);
  CHECK(r.best_model != nullptr);
}

TEST_CASE("tnce loss decreases from 2 log 2") {
  RunConfig c = gaussian_1d(Method::kTnce, 1200);
  TrainResult r = train(c);
  REQUIRE_FALSE(r.failed);
  CHECK(r.records.front().loss == doctest::Approx(kTwoLog2).epsilon(0.02));
  CHECK(r.records.back().loss < r.records.front().loss);
}

TEST_CASE("identical seeds give identical CSV bytes and checkpoints") {
  RunConfig c = gaussian_1d(Method::kStnceS, 200);
  c.checkpoints = true;
  c.ema_decay = 0.99;
  const auto base = std::filesystem::temp_directory_path() / "training_determinism";
  std::filesystem::remove_all(base);
  train(c, base / "a");
  train(c, base / "b");
  CHECK(slurp(base / "a" / "metrics.csv") == slurp(base / "b" / "metrics.csv"));
  CHECK(slurp(base / "a" / "final.ckpt") == slurp(base / "b" / "final.ckpt"));
  CHECK(std::filesystem::exists(base / "a" / "ema.ckpt"));
  CHECK(std::filesystem::exists(base / "a" / "best.ckpt"));
  const std::string csv = slurp(base / "a" / "metrics.csv");
  CHECK(csv.rfind(kMetricsHeader, 0) == 0);
  std::filesystem::remove_all(base);

  c.seed = 4;
  TrainResult other = train(c);
  RunConfig c3 = c;
  c3.seed = 3;
  CHECK(metrics_csv(other.records) != metrics_csv(train(c3).records));
}

TEST_CASE("Gaussian model full-batch fit recovers the parameters") {
  const GmmTarget g = GmmTarget::gaussian(Vec::Constant(1, 0.5), 0.8);
  LossSpec spec = LossSpec::for_method(Method::kStnceW);
  Rng rng(7);
  PairBatch b = sample_pairs_default(g, spec.kernel, 50000, rng);
  GaussianEnergyModel m(0.0, 0.0);
  FitResult f = fit_full_batch(spec, m, b);
  CHECK(f.converged);
  CHECK(std::abs(m.mean() - 0.5) < 0.05);
  CHECK(std::abs(std::exp(m.log_std()) - 0.8) < 0.05);
}

TEST_CASE("Gaussian energy model gradients") {
  GaussianEnergyModel m(0.3, -0.2);
  Rng rng(8);
  Points x = testing::random_points(1, 6, rng);
  Vec t = testing::random_times(6, rng);
  Vec w = testing::random_points(6, 1, rng).col(0);
  std::vector<double> g(2, 0.0);
  m.accumulate_parameter_gradient(x, t, w, g);
  CHECK(testing::fd_check(m.parameters(), [&] { return w.dot(m.potential(x, t)); }, g) < 1e-7);
}
