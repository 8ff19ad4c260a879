#pragma once

#include "stnce/config.hpp"
#include "stnce/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace stnce {

inline constexpr const char* kWorkersEnv = "STNCE_WORKERS";

/// Worker count from STNCE_WORKERS; 1 when unset. Malformed values raise ConfigError.
int workers_from_env();

/// Runs fn(0..n-1) on `workers` threads. The first exception is rethrown once all workers stop.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

/// quick: seconds-scale shape checks; desk: single-core CPU profile; full: 100k steps and the complete sweep grids.
enum class Profile { kQuick, kDesk, kFull };
Profile parse_profile(const std::string& s);
std::string to_string(Profile p);

struct CellSummary {
  std::string id;
  bool failed = false;
  std::string failure;
  long best_step = -1;
  MetricsRecord best;
  MetricsRecord last;
  nlohmann::json extra = nlohmann::json::object();
  /// Loaded from an earlier run instead of trained.
  bool reused = false;
};

using CellHook = std::function<void(const RunConfig&, const TrainResult&, nlohmann::json& extra)>;

/// Trains `cfg` into `dir` (config.json, metrics.csv, checkpoints, summary.json). A directory whose
/// summary.json exists and whose config.json equals `cfg` is not retrained.
CellSummary run_cell(const RunConfig& cfg, const std::filesystem::path& dir, const CellHook& hook = {});
CellSummary read_cell_summary(const std::filesystem::path& dir);

/// Writes dir/manifest.json listing the files below `dir` next to `info`.
void write_manifest(const std::filesystem::path& dir, const nlohmann::json& info);

struct SuiteOptions {
  std::filesystem::path out_dir = "runs";
  Profile profile = Profile::kDesk;
  int workers = 1;
  std::vector<std::uint64_t> seeds{0};
  /// Empty selects the suite's default method list.
  std::vector<Method> methods;
  /// failure_modes / teaser_1d: indices into failure_mode_grid(); empty selects the profile default.
  std::vector<int> grid_points;
  std::function<void(const std::string&)> log;
};

// --- failure modes ------------------------------------------------------------

struct FailureModeRow {
  int point = 0;
  double mu1 = 0.0;
  double mu2 = 0.0;
  double multimodality = 0.0;
  double mismatch = 0.0;
  Method method = Method::kStnceM;
  std::uint64_t seed = 0;
  double error = 1.0;
  bool failed = false;
};

const std::vector<Method>& failure_mode_methods();
/// quick and desk use six points: the two with the highest mismatch, the two with the highest
/// multimodality and two with neither; full uses all 25.
std::vector<int> failure_mode_default_points(Profile p);
RunConfig failure_mode_config(const FailureGridPoint& p, Method m, Profile profile, std::uint64_t seed);
/// 1 - R^2 of the final EMA model on 4096 fresh samples of p_1.
inline constexpr int kFailureEvalPoints = 4096;
std::vector<FailureModeRow> run_failure_modes(const SuiteOptions& opt);

// --- 1-D teaser --------------------------------------------------------------

/// Trains the failure-mode methods on one grid point and writes energies.csv with
/// U(x, 1) of each method next to the true energy on a grid.
nlohmann::json run_teaser_1d(const SuiteOptions& opt);

// --- random GMM table --------------------------------------------------------

struct SweepSetting {
  Method method = Method::kStnceW;
  double lr = 1e-3;
  double sigma_time = -1.0;
  double sigma_white = 0.1;
  std::string id() const;
};

const std::vector<Method>& random_gmm_methods();
std::vector<SweepSetting> random_gmm_sweep(Method m, Profile p);
RunConfig random_gmm_config(const SweepSetting& s, Profile p, std::uint64_t seed);

struct TableRow {
  Method method = Method::kStnceW;
  SweepSetting best;
  int n_seeds = 0;
  int failed_cells = 0;
  double mse = 0.0;
  double ratio = 0.0;
  double norm_mse = 0.0;
  double norm_mse_std = 0.0;
  double norm_nll = 0.0;
  double norm_nll_std = 0.0;
};

/// Every sweep cell is trained with each seed; per method, the setting with the lowest mean NormMSE
/// at its best validation step wins. Outside the quick profile the winner is then trained with the
/// two seeds after the largest sweep seed and the row reports mean and std over all of them.
std::vector<TableRow> run_random_gmm_table(const SuiteOptions& opt);
std::vector<std::uint64_t> random_gmm_confirm_seeds(const SuiteOptions& opt);

// --- kernel and limit checks ---------------------------------------------------

struct KernelCheckOptions {
  double target_mean = 0.5;
  double target_std = 0.8;
  double t = 0.8;
  double t_prime = 0.4;
  int nodes = 4001;
  double dt = 1e-3;
  double t_lo = 0.2;
  double t_hi = 0.8;
  int samples = 100000;
  std::vector<double> fold_sigmas{0.01, 0.1};
  std::uint64_t seed = 0;
};

struct KernelCheckReport {
  double quadrature_rel_err = 0.0;
  double fr_max_abs_logit = 0.0;
  double fr_mean_abs_logit = 0.0;
  std::vector<double> fold_ks;
  double fold_symmetry_rel_err = 0.0;
  nlohmann::json to_json() const;
};

KernelCheckReport run_kernel_checks(const KernelCheckOptions& opt);

std::vector<LimitRow> run_limit_checks(const LimitConfig& cfg, const std::vector<double>& dt_grid, std::uint64_t seed);

// --- consistency and asymptotic variance ----------------------------------------

struct ConsistencyOptions {
  double true_mean = 0.5;
  double true_std = 0.8;
  Method method = Method::kStnceW;
  double sigma_white = 1.0;
  std::vector<long> sizes{1000, 10000, 100000};
  int seeds = 5;
  std::uint64_t seed = 0;
};

struct ConsistencyRow {
  long n = 0;
  std::vector<double> errors;
  double median = 0.0;
  int unconverged = 0;
};

/// Full-batch fits of the two-parameter Gaussian energy model; error is the Euclidean distance of
/// (mean, log std) to the truth.
std::vector<ConsistencyRow> run_consistency(const ConsistencyOptions& opt);

struct VarianceReport {
  long n = 0;
  int fits = 0;
  int unconverged = 0;
  double empirical = 0.0;  // N * mean squared parameter error
  double predicted = 0.0;  // Tr(C1^-1 C2 C1^-1)
  double condition = 0.0;
  double ratio() const { return empirical / predicted; }
};

VarianceReport run_variance_check(const ConsistencyOptions& opt, long n, int fits, long mc_samples);

// --- suite driver --------------------------------------------------------------

const std::vector<std::string>& suite_names();

/// Runs a named suite into opt.out_dir, writes report.md / report.csv / summary.json and the
/// manifest, and returns the summary.
nlohmann::json run_suite(const std::string& name, const SuiteOptions& opt);

}  // namespace stnce
