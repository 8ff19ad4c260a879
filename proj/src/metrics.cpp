#include "stnce/metrics.hpp"

#include "stnce/losses.hpp"

namespace stnce {

bool MetricsRecord::finite() const {
  return std::isfinite(loss) && std::isfinite(mse) && std::isfinite(ratio) && std::isfinite(norm_mse) &&
         std::isfinite(norm_nll) && std::isfinite(logz_hat);
}

namespace {

Vec at_time_one(const EnergyModel& model, const Points& x) { return model.potential(x, Vec::Ones(x.cols())); }

}  // namespace

double estimate_logz1(const EnergyModel& model, const GmmTarget& target, const Points& samples) {
  if (samples.cols() == 0) throw ContractError("estimate_logz1: no samples");
  const Vec u = at_time_one(model, samples);
  const Vec lp = InterpolantMarginal(target, 1.0).log_density_batch(samples);
  Vec w = -u - lp;
  const double lse = log_sum_exp(w);
  if (!std::isfinite(lse)) throw NumericError("estimate_logz1: all importance weights vanish");
  return lse - std::log(static_cast<double>(samples.cols()));
}

double estimate_logz1(const EnergyModel& model, const GmmTarget& target, int n, Rng& rng) {
  return estimate_logz1(model, target, sample_target(target, n, rng));
}

MetricsRecord eval_metrics(const EnergyModel& model, const GmmTarget& target, const Points& eval_x,
                           const Points& logz_x) {
  if (eval_x.cols() < 2) throw ContractError("eval_metrics: need at least 2 points");
  const Vec u = at_time_one(model, eval_x);
  const Vec lp = InterpolantMarginal(target, 1.0).log_density_batch(eval_x);
  MetricsRecord r;
  r.n_eval = eval_x.cols();
  r.logz_hat = estimate_logz1(model, target, logz_x);
  const Vec d = lp + u;  // log p_d - log p_theta for the unnormalized model
  const double mean = d.mean();
  r.mse = d.squaredNorm() / static_cast<double>(d.size());
  r.ratio = 2.0 * (d.array() - mean).square().mean();
  r.norm_mse = (d.array() + r.logz_hat).square().mean();
  r.norm_nll = (u.array() + r.logz_hat).mean();
  return r;
}

MetricsRecord eval_metrics(const EnergyModel& model, const GmmTarget& target, int n, Rng& rng) {
  const Points eval_x = sample_target(target, n, rng);
  const Points logz_x = sample_target(target, n, rng);
  return eval_metrics(model, target, eval_x, logz_x);
}

FailureError failure_error(const Vec& true_energy, const Vec& model_energy) {
  if (true_energy.size() != model_energy.size()) throw ContractError("failure_error: size mismatch");
  if (true_energy.size() < 2) throw ContractError("failure_error: need at least 2 points");
  const Eigen::ArrayXd a = true_energy.array() - true_energy.mean();
  const Eigen::ArrayXd b = model_energy.array() - model_energy.mean();
  const double saa = (a * a).sum();
  const double sbb = (b * b).sum();
  if (!(saa > 0.0) || !(sbb > 0.0) || !std::isfinite(sbb)) return {1.0, true};
  const double r = (a * b).sum() / std::sqrt(saa * sbb);
  return {std::clamp(1.0 - r * r, 0.0, 1.0), false};
}

FailureError failure_error(const EnergyModel& model, const GmmTarget& target, const Points& x) {
  if (x.cols() < 100) throw ContractError("failure_error: need at least 100 points");
  const Vec truth = -InterpolantMarginal(target, 1.0).log_density_batch(x);
  return failure_error(truth, at_time_one(model, x));
}

AsymptoticVariance asymptotic_variance(const EnergyModel& model, const PairBatch& batch, long n_tuples,
                                       bool pin_reference) {
  const auto p = static_cast<Eigen::Index>(model.num_parameters());
  if (p == 0 || p > 16) throw ContractError("asymptotic_variance: needs a small parametric family");
  if (n_tuples < 1) throw ContractError("asymptotic_variance: n_tuples must be positive");
  const Vec f = stnce_logits(model, batch, pin_reference);
  Mat c1 = Mat::Zero(p, p);
  Mat c2 = Mat::Zero(p, p);
  std::vector<double> g(static_cast<std::size_t>(p));
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    std::fill(g.begin(), g.end(), 0.0);
    const bool pin_x = pin_reference && batch.t[i] == 0.0;
    const bool pin_xp = pin_reference && batch.tp[i] == 0.0;
    if (!pin_x) model.accumulate_parameter_gradient(batch.x.col(i), batch.t.segment(i, 1), -Vec::Ones(1), g);
    if (!pin_xp) model.accumulate_parameter_gradient(batch.xp.col(i), batch.tp.segment(i, 1), Vec::Ones(1), g);
    const Eigen::Map<const Vec> gv(g.data(), p);
    const double sm = sigmoid(-f[i]);
    const double sp = sigmoid(f[i]);
    c1.noalias() += (sm * sp) * gv * gv.transpose();
    c2.noalias() += (sm * sm) * gv * gv.transpose();
  }
  const auto n = static_cast<double>(batch.size());
  c1 /= n;
  c2 /= n;
  Eigen::JacobiSVD<Mat> svd(c1);
  const Vec sv = svd.singularValues();
  AsymptoticVariance out;
  out.condition = sv[0] / sv[sv.size() - 1];
  out.c1 = c1;
  out.c2 = c2;
  if (!(sv[sv.size() - 1] > 0.0) || out.condition > 1e12) {
    throw NumericError("asymptotic_variance: C1 is singular (condition " + std::to_string(out.condition) + ")");
  }
  const Mat inv = c1.inverse();
  out.trace = (inv * c2 * inv).trace() / static_cast<double>(n_tuples);
  return out;
}

Points langevin_sample(const EnergyModel& model, const Points& x0, double step_size, int n_steps, Rng& rng) {
  if (!(step_size >= 0.0)) throw ConfigError("langevin: step_size must be nonnegative");
  if (n_steps < 0) throw ConfigError("langevin: n_steps must be nonnegative");
  Points x = x0;
  const Vec ones = Vec::Ones(x.cols());
  const double noise = std::sqrt(2.0 * step_size);
  Points dx;
  Vec dt;
  for (int s = 0; s < n_steps; ++s) {
    model.input_gradient(x, ones, dx, dt);
    x -= step_size * dx;
    if (noise > 0.0)
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += noise * rng.normal();
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 1e6) throw NumericError("langevin: chain diverged");
  }
  return x;
}

Points diffusion_sample(const ScoreFn& score, int dim, int n, int n_steps, Rng& rng, double t_min) {
  if (n_steps < 2) throw ConfigError("diffusion_sample: n_steps must be >= 2");
  if (dim < 1 || n < 1) throw ConfigError("diffusion_sample: dim and n must be positive");
  if (!(t_min > 0.0 && t_min < 1.0)) throw ConfigError("diffusion_sample: t_min must lie in (0, 1)");
  Points x(dim, n);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = (1.0 - t_min) * rng.normal();
  for (int s = 0; s < n_steps; ++s) {
    const double t = t_min + (1.0 - t_min) * s / n_steps;
    const double tn = s + 1 == n_steps ? 1.0 : t_min + (1.0 - t_min) * (s + 1) / n_steps;
    const Points sc = score(x, Vec::Constant(n, t));
    for (int i = 0; i < n; ++i) {
      const GaussianStep g = seeds1_step(x.col(i), sc.col(i), t, tn);
      const double sd = std::sqrt(g.var);
      for (int j = 0; j < dim; ++j) x(j, i) = g.mean[j] + sd * rng.normal();
    }
  }
  return x;
}

}  // namespace stnce
