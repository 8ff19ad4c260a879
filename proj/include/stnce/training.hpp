#pragma once

#include "stnce/losses.hpp"
#include "stnce/metrics.hpp"
#include "stnce/network.hpp"
#include "stnce/pairs.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace stnce {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled (AdamW-style) weight decay; 0 disables it.
  double weight_decay = 0.0;

  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update in place. Throws NumericError on
/// non-finite gradients, leaving parameters untouched.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads, const AdamConfig& cfg);

/// Target description from a run config.
struct TargetSpec {
  std::string kind = "random_gmm";  // gmm | random_gmm | failure_mode
  Vec weights;
  Mat means;
  Mat stds;
  int components = 20;
  int dim = 10;
  double comp_std = 0.1;
  std::uint64_t seed = 1;
  double mu1 = 0.0;
  double mu2 = 0.0;

  GmmTarget build() const;
};

struct ModelSpec {
  std::string kind = "network";  // network | gaussian
  Architecture arch;
  double init_mean = 0.0;
  double init_log_std = 0.0;
};

std::unique_ptr<EnergyModel> make_model(const ModelSpec& spec, int input_dim, Rng& rng);
/// A model of the given spec holding a copy of `params`.
std::unique_ptr<EnergyModel> model_from_parameters(const ModelSpec& spec, int input_dim,
                                                   std::span<const double> params);

struct RunConfig {
  std::string name = "run";
  TargetSpec target;
  ModelSpec model;
  LossSpec loss;
  Scheme scheme = Scheme::kDefault;
  /// Clean data per step; the reuse scheme turns each into two tuples.
  int batch_size = 250;
  long steps = 20000;
  long eval_every = 1000;
  AdamConfig adam;
  /// 0 disables EMA tracking.
  double ema_decay = 0.0;
  /// Evaluate and select with EMA parameters instead of raw ones.
  bool eval_ema = false;
  std::uint64_t seed = 0;
  int n_val = 4096;
  int n_logz = 65536;
  /// Metric minimized for best-step selection: norm_mse | mse | norm_nll.
  std::string select_metric = "norm_mse";
  /// Write measured wall time into the metrics CSV (makes it run-dependent).
  bool record_wall_time = false;
  /// Write model checkpoints into the run directory.
  bool checkpoints = true;

  void validate() const;
};

/// EMA decay used at a given step: min(decay, (1 + step) / (10 + step)).
double ema_effective_decay(double decay, long step);

struct TrainResult {
  std::vector<MetricsRecord> records;
  long best_step = -1;
  std::size_t best_index = 0;
  bool failed = false;
  std::string failure;
  std::vector<double> params;
  std::vector<double> ema;
  double wall_ms = 0.0;
  /// The model selected at the best step (raw or EMA per config).
  std::unique_ptr<EnergyModel> best_model;
};

/// Trains from scratch. When `out_dir` is non-empty, writes metrics.csv and
/// checkpoints there.
TrainResult train(const RunConfig& cfg, const std::filesystem::path& out_dir = {});

inline constexpr const char* kMetricsHeader = "step,loss,mse,ratio,norm_mse,norm_nll,wall_ms";
std::string metrics_csv(const std::vector<MetricsRecord>& records);

// --- full-batch fitting for small parametric families ---------------------------

struct FitOptions {
  int max_iters = 100;
  double grad_tol = 1e-10;
  double fd_step = 1e-6;
};

struct FitResult {
  int iterations = 0;
  bool converged = false;
  double loss = 0.0;
  double grad_norm = 0.0;
};

/// Minimizes the loss over a fixed batch with damped Newton steps (Hessian by
/// central differences of the analytic gradient, backtracking line search).
FitResult fit_full_batch(const LossSpec& spec, EnergyModel& model, const PairBatch& batch, const FitOptions& opt = {});

}  // namespace stnce
