#pragma once

#include "stnce/kernels.hpp"
#include "stnce/model.hpp"
#include "stnce/targets.hpp"

#include <string>

namespace stnce {

struct MetricsRecord {
  long step = 0;
  double loss = 0.0;
  double mse = 0.0;
  double ratio = 0.0;
  double norm_mse = 0.0;
  double norm_nll = 0.0;
  double logz_hat = 0.0;
  long n_eval = 0;
  std::string method;
  double wall_ms = 0.0;

  bool finite() const;
};

/// log Z1 ~= logsumexp_i(-U(x_i, 1) - log p_d(x_i)) - log n over x_i ~ p_d.
double estimate_logz1(const EnergyModel& model, const GmmTarget& target, const Points& samples);
double estimate_logz1(const EnergyModel& model, const GmmTarget& target, int n, Rng& rng);

/// MSE, Ratio, NormMSE and NormNLL on `eval_x` (samples of the target), with
/// log Z1 estimated on `logz_x`. Ratio is the mean over all ordered pairs of
/// the squared difference of pairwise log-density differences, which equals
/// 2 Var(log p_d - log p_theta) over the sample.
MetricsRecord eval_metrics(const EnergyModel& model, const GmmTarget& target, const Points& eval_x,
                           const Points& logz_x);
MetricsRecord eval_metrics(const EnergyModel& model, const GmmTarget& target, int n, Rng& rng);

struct FailureError {
  double error = 1.0;
  bool degenerate = false;
};

/// 1 - Pearson r^2 between -log p_d(x) and U(x, 1) over `x`.
FailureError failure_error(const EnergyModel& model, const GmmTarget& target, const Points& x);
FailureError failure_error(const Vec& true_energy, const Vec& model_energy);

/// Monte-Carlo pieces of the asymptotic covariance of the stNCE estimator.
struct AsymptoticVariance {
  Mat c1;
  Mat c2;
  /// Tr(C1^-1 C2 C1^-1) / n_tuples.
  double trace = 0.0;
  double condition = 0.0;
};

/// Estimates C1 = E[grad F grad F^T sigma(-F) sigma(F)] and
/// C2 = E[grad F grad F^T sigma(-F)^2] over the rows of `batch` (drawn from
/// p_d p_n) at the model's current parameters.
AsymptoticVariance asymptotic_variance(const EnergyModel& model, const PairBatch& batch, long n_tuples,
                                       bool pin_reference = false);

/// x <- x - eta grad_x U(x, 1) + sqrt(2 eta) xi.
Points langevin_sample(const EnergyModel& model, const Points& x0, double step_size, int n_steps, Rng& rng);

/// Ancestral simulation with the first-order denoising step on a uniform time
/// grid from t_min to 1, starting from N(0, (1 - t_min)^2 I).
Points diffusion_sample(const ScoreFn& score, int dim, int n, int n_steps, Rng& rng, double t_min = 1e-3);

}  // namespace stnce
