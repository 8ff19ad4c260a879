#include "stnce/suites.hpp"

#include "stnce/checkpoint.hpp"
#include "stnce/kernels.hpp"
#include "stnce/parametric.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace stnce {

namespace fs = std::filesystem;
using nlohmann::json;

int workers_from_env() {
  const char* v = std::getenv(kWorkersEnv);
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1 || n > 1024) throw ConfigError(std::string(kWorkersEnv) + " must be a positive integer");
  return static_cast<int>(n);
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t w = std::min<std::size_t>(std::max(workers, 1), std::max<std::size_t>(n, 1));
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < w; ++k) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next.store(n);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

Profile parse_profile(const std::string& s) {
  if (s == "quick") return Profile::kQuick;
  if (s == "desk") return Profile::kDesk;
  if (s == "full") return Profile::kFull;
  throw ConfigError("unknown profile: " + s);
}

std::string to_string(Profile p) {
  switch (p) {
    case Profile::kQuick: return "quick";
    case Profile::kDesk: return "desk";
    case Profile::kFull: return "full";
  }
  return "?";
}

// --- cells ----------------------------------------------------------------------

namespace {

json record_json(const MetricsRecord& r) {
  return {{"step", r.step},         {"loss", r.loss},         {"mse", r.mse},       {"ratio", r.ratio},
          {"norm_mse", r.norm_mse}, {"norm_nll", r.norm_nll}, {"logz_hat", r.logz_hat}, {"n_eval", r.n_eval}};
}

MetricsRecord record_from(const json& j) {
  MetricsRecord r;
  r.step = j.at("step").get<long>();
  r.loss = j.at("loss").get<double>();
  r.mse = j.at("mse").get<double>();
  r.ratio = j.at("ratio").get<double>();
  r.norm_mse = j.at("norm_mse").get<double>();
  r.norm_nll = j.at("norm_nll").get<double>();
  r.logz_hat = j.at("logz_hat").get<double>();
  r.n_eval = j.at("n_eval").get<long>();
  return r;
}

json read_json(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw ConfigError("cannot read " + p.string());
  return json::parse(is);
}

void write_text(const fs::path& p, const std::string& text) {
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    os << text;
    if (!os) throw std::runtime_error("cannot write " + p.string());
  }
  fs::rename(tmp, p);
}

void log_line(const SuiteOptions& opt, const std::string& msg) {
  static std::mutex m;
  std::lock_guard lock(m);
  if (opt.log) opt.log(msg);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

CellSummary read_cell_summary(const fs::path& dir) {
  const json j = read_json(dir / "summary.json");
  CellSummary s;
  s.id = j.at("id").get<std::string>();
  s.failed = j.at("failed").get<bool>();
  s.failure = j.at("failure").get<std::string>();
  s.best_step = j.at("best_step").get<long>();
  if (j.at("best").is_object()) s.best = record_from(j.at("best"));
  if (j.at("last").is_object()) s.last = record_from(j.at("last"));
  s.extra = j.at("extra");
  return s;
}

CellSummary run_cell(const RunConfig& cfg, const fs::path& dir, const CellHook& hook) {
  const json cfg_json = run_config_to_json(cfg);
  if (fs::exists(dir / "summary.json") && fs::exists(dir / "config.json")) {
    try {
      if (read_json(dir / "config.json") == cfg_json) {
        CellSummary s = read_cell_summary(dir);
        s.reused = true;
        return s;
      }
    } catch (const std::exception&) {
      // An unreadable summary is retrained below.
    }
  }
  fs::create_directories(dir);
  fs::remove(dir / "summary.json");
  write_text(dir / "config.json", cfg_json.dump(2) + "\n");
  TrainResult r = train(cfg, dir);
  json extra = json::object();
  if (hook && !r.failed) {
    try {
      hook(cfg, r, extra);
    } catch (const std::exception& e) {
      r.failed = true;
      r.failure = std::string("post-processing: ") + e.what();
    }
  }
  json summary = {{"id", cfg.name},
                  {"failed", r.failed},
                  {"failure", r.failure},
                  {"best_step", r.best_step},
                  {"best", r.records.empty() ? json(nullptr) : record_json(r.records[r.best_index])},
                  {"last", r.records.empty() ? json(nullptr) : record_json(r.records.back())},
                  {"extra", extra}};
  if (cfg.record_wall_time) summary["wall_ms"] = r.wall_ms;
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  return read_cell_summary(dir);
}

void write_manifest(const fs::path& dir, const json& info) {
  json files = json::array();
  std::vector<std::string> names;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir).generic_string();
    if (rel == "manifest.json") continue;
    names.push_back(rel);
  }
  std::sort(names.begin(), names.end());
  for (const auto& n : names) files.push_back({{"path", n}, {"bytes", fs::file_size(dir / n)}});
  json m = info;
  m["files"] = files;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

// --- failure modes --------------------------------------------------------------

const std::vector<Method>& failure_mode_methods() {
  static const std::vector<Method> m = {Method::kTnce, Method::kTcnce, Method::kStnceM};
  return m;
}

std::vector<int> failure_mode_default_points(Profile p) {
  if (p == Profile::kFull) {
    std::vector<int> all(failure_mode_grid().size());
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  // (-0.9,-0.9), (1,1): neither; (-0.91,0.91), (-2.29,1.55): most multimodal; (-1.05,-1.05), (-3,-3): full mismatch.
  return {0, 10, 4, 14, 15, 20};
}

RunConfig failure_mode_config(const FailureGridPoint& p, Method m, Profile profile, std::uint64_t seed) {
  RunConfig c;
  char name[96];
  std::snprintf(name, sizeof name, "fm_%+.2f_%+.2f_%s_s%llu", p.mu1, p.mu2, to_string(m).c_str(),
                static_cast<unsigned long long>(seed));
  c.name = name;
  c.seed = seed;
  c.target.kind = "failure_mode";
  c.target.mu1 = p.mu1;
  c.target.mu2 = p.mu2;
  c.target.comp_std = kFailureComponentStd;
  c.model.kind = "network";
  c.model.arch.input_dim = 1;
  c.model.arch.time_embed_dim = 16;
  c.model.arch.hidden_dim = 64;
  c.model.arch.expansion_dim = 64;
  c.model.arch.n_blocks = 2;
  PerturbationKernel k;
  k.sigma_white = 0.1;
  k.proposal.sigma_time = -1.0;
  c.loss = LossSpec::for_method(m, k);
  c.batch_size = 256;
  c.adam.lr = 1e-3;
  c.adam.weight_decay = 1e-4;
  c.ema_decay = 0.9999;
  c.eval_ema = true;
  c.select_metric = "norm_mse";
  c.checkpoints = true;
  switch (profile) {
    case Profile::kQuick:
      c.steps = 200;
      c.eval_every = 100;
      c.model.arch.hidden_dim = 16;
      c.model.arch.expansion_dim = 16;
      c.n_val = 512;
      c.n_logz = 1024;
      break;
    case Profile::kDesk:
      c.steps = 10000;
      c.eval_every = 2500;
      c.n_val = 2048;
      c.n_logz = 4096;
      break;
    case Profile::kFull:
      c.steps = 100000;
      c.eval_every = 10000;
      c.model.arch.hidden_dim = 128;
      c.model.arch.expansion_dim = 128;
      break;
  }
  return c;
}

namespace {

void failure_error_hook(const RunConfig& cfg, const TrainResult& r, json& extra) {
  const GmmTarget target = cfg.target.build();
  const std::vector<double>& params = r.ema.empty() ? r.params : r.ema;
  auto model = model_from_parameters(cfg.model, target.dim(), params);
  Rng rng = Rng(cfg.seed).split(99);
  const Points x = sample_target(target, kFailureEvalPoints, rng);
  const FailureError e = failure_error(*model, target, x);
  extra["error"] = e.error;
  extra["degenerate"] = e.degenerate;
}

}  // namespace

std::vector<FailureModeRow> run_failure_modes(const SuiteOptions& opt) {
  const auto points = opt.grid_points.empty() ? failure_mode_default_points(opt.profile) : opt.grid_points;
  const auto& methods = opt.methods.empty() ? failure_mode_methods() : opt.methods;
  const auto& grid = failure_mode_grid();
  struct Cell {
    int point;
    Method method;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (int p : points) {
    if (p < 0 || p >= static_cast<int>(grid.size())) throw ConfigError("grid point out of range");
    for (Method m : methods)
      for (auto s : opt.seeds) cells.push_back({p, m, s});
  }
  std::vector<FailureModeRow> rows(cells.size());
  parallel_for(cells.size(), opt.workers, [&](std::size_t i) {
    const Cell& c = cells[i];
    const RunConfig cfg = failure_mode_config(grid[c.point], c.method, opt.profile, c.seed);
    const CellSummary s = run_cell(cfg, opt.out_dir / "cells" / cfg.name, failure_error_hook);
    const FailureScores sc = failure_scores(grid[c.point].mu1, grid[c.point].mu2, kFailureScoreSigma);
    FailureModeRow& row = rows[i];
    row.point = c.point;
    row.mu1 = grid[c.point].mu1;
    row.mu2 = grid[c.point].mu2;
    row.multimodality = sc.multimodality;
    row.mismatch = sc.mismatch;
    row.method = c.method;
    row.seed = c.seed;
    row.failed = s.failed;
    row.error = s.failed ? 1.0 : s.extra.at("error").get<double>();
    log_line(opt, cfg.name + (s.reused ? " (cached)" : "") + " error=" + fmt("%.4f", row.error));
  });
  return rows;
}

// --- teaser -------------------------------------------------------------------

json run_teaser_1d(const SuiteOptions& opt) {
  const int point = opt.grid_points.empty() ? 4 : opt.grid_points.front();
  const auto& grid = failure_mode_grid();
  if (point < 0 || point >= static_cast<int>(grid.size())) throw ConfigError("grid point out of range");
  const auto& methods = opt.methods.empty() ? failure_mode_methods() : opt.methods;
  const std::uint64_t seed = opt.seeds.empty() ? 0 : opt.seeds.front();
  std::vector<CellSummary> summaries(methods.size());
  parallel_for(methods.size(), opt.workers, [&](std::size_t i) {
    const RunConfig cfg = failure_mode_config(grid[point], methods[i], opt.profile, seed);
    summaries[i] = run_cell(cfg, opt.out_dir / "cells" / cfg.name, failure_error_hook);
    log_line(opt, cfg.name + (summaries[i].reused ? " (cached)" : ""));
  });

  const GmmTarget target = failure_mode_target(grid[point]);
  const int n = 401;
  const double lo = std::min(grid[point].mu1, -1.0) - 1.0, hi = std::max(grid[point].mu2, 1.0) + 1.0;
  Points x(1, n);
  for (int i = 0; i < n; ++i) x(0, i) = lo + (hi - lo) * i / (n - 1);
  const Vec ones = Vec::Ones(n);
  std::vector<Vec> energies;
  energies.push_back(-marginal_log_density(target, x, ones));
  std::string header = "x,true";
  json errors = json::object();
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const RunConfig cfg = failure_mode_config(grid[point], methods[i], opt.profile, seed);
    header += "," + to_string(methods[i]);
    if (summaries[i].failed) {
      energies.push_back(Vec::Constant(n, std::nan("")));
      continue;
    }
    const EnergyNetwork net = load_network(opt.out_dir / "cells" / cfg.name / "ema.ckpt");
    energies.push_back(net.potential(x, ones));
    errors[to_string(methods[i])] = summaries[i].extra.at("error");
  }
  std::string csv = header + "\n";
  for (int i = 0; i < n; ++i) {
    csv += fmt("%.17g", x(0, i));
    for (const auto& e : energies) csv += "," + fmt("%.17g", e[i]);
    csv += "\n";
  }
  write_text(opt.out_dir / "energies.csv", csv);
  return {{"point", point}, {"mu1", grid[point].mu1}, {"mu2", grid[point].mu2}, {"errors", errors}};
}

// --- random GMM table -------------------------------------------------------------

std::string SweepSetting::id() const {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%s_lr%g_st%g_sw%g", to_string(method).c_str(), lr, sigma_time, sigma_white);
  return buf;
}

const std::vector<Method>& random_gmm_methods() {
  static const std::vector<Method> m = {Method::kTnce, Method::kTcnce, Method::kStnceW, Method::kStnceS,
                                        Method::kStnceO};
  return m;
}

namespace {

bool uses_time_proposal(Method m) { return m != Method::kTcnce && m != Method::kNce; }
bool uses_white_noise(Method m) { return m == Method::kTcnce || m == Method::kStnceW || m == Method::kStnceM; }

}  // namespace

std::vector<SweepSetting> random_gmm_sweep(Method m, Profile p) {
  std::vector<double> lrs, times, whites;
  switch (p) {
    case Profile::kQuick:
      lrs = {1e-3};
      times = {0.1};
      whites = {0.1};
      break;
    case Profile::kDesk:
      lrs = {3e-4, 1e-3};
      times = {-1.0, 0.1};
      whites = {0.1, 1.0};
      if (m == Method::kStnceW || m == Method::kStnceM) lrs = {1e-3};
      if (m == Method::kStnceS || m == Method::kStnceO || m == Method::kRneS || m == Method::kRneO)
        times = {0.1, 0.01};
      break;
    case Profile::kFull:
      lrs = {1e-4, 3e-4, 1e-3};
      times = {-1.0, 0.1, 0.01};
      whites = {0.01, 0.1, 1.0};
      break;
  }
  if (!uses_time_proposal(m)) times = {-1.0};
  if (!uses_white_noise(m)) whites = {0.1};
  std::vector<SweepSetting> out;
  for (double lr : lrs)
    for (double st : times)
      for (double sw : whites) out.push_back({m, lr, st, sw});
  return out;
}

RunConfig random_gmm_config(const SweepSetting& s, Profile p, std::uint64_t seed) {
  RunConfig c;
  c.name = s.id() + "_s" + std::to_string(seed);
  c.seed = seed;
  c.target.kind = "random_gmm";
  c.target.components = 20;
  c.target.dim = 10;
  c.target.comp_std = 0.1;
  c.target.seed = 1;
  c.model.kind = "network";
  c.model.arch.input_dim = 10;
  PerturbationKernel k;
  k.proposal.sigma_time = s.sigma_time;
  k.sigma_white = s.sigma_white;
  c.loss = LossSpec::for_method(s.method, k);
  c.scheme = Scheme::kReuse;
  c.batch_size = 125;
  c.adam.lr = s.lr;
  c.select_metric = "norm_mse";
  c.checkpoints = true;
  switch (p) {
    case Profile::kQuick:
      c.model.arch.hidden_dim = 16;
      c.model.arch.expansion_dim = 32;
      c.model.arch.n_blocks = 1;
      c.steps = 300;
      c.eval_every = 100;
      c.batch_size = 64;
      c.n_val = 512;
      c.n_logz = 2048;
      break;
    case Profile::kDesk:
      c.model.arch.hidden_dim = 64;
      c.model.arch.expansion_dim = 128;
      c.model.arch.n_blocks = 2;
      c.steps = 20000;
      c.eval_every = 1000;
      break;
    case Profile::kFull:
      c.steps = 100000;
      c.eval_every = 2000;
      break;
  }
  return c;
}

std::vector<std::uint64_t> random_gmm_confirm_seeds(const SuiteOptions& opt) {
  if (opt.profile == Profile::kQuick || opt.seeds.empty()) return {};
  const std::uint64_t top = *std::max_element(opt.seeds.begin(), opt.seeds.end());
  return {top + 1, top + 2};
}

std::vector<TableRow> run_random_gmm_table(const SuiteOptions& opt) {
  const auto& methods = opt.methods.empty() ? random_gmm_methods() : opt.methods;
  struct Cell {
    SweepSetting setting;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  std::vector<CellSummary> summaries;
  auto run_cells = [&](std::size_t from) {
    summaries.resize(cells.size());
    parallel_for(cells.size() - from, opt.workers, [&](std::size_t k) {
      const std::size_t i = from + k;
      const RunConfig cfg = random_gmm_config(cells[i].setting, opt.profile, cells[i].seed);
      summaries[i] = run_cell(cfg, opt.out_dir / "cells" / cfg.name);
      const auto& b = summaries[i].best;
      log_line(opt, cfg.name + (summaries[i].reused ? " (cached)" : "") + " best_step=" +
                        std::to_string(summaries[i].best_step) + " norm_mse=" + fmt("%.4g", b.norm_mse) +
                        " norm_nll=" + fmt("%.4g", b.norm_nll) + (summaries[i].failed ? " FAILED" : ""));
    });
  };
  for (Method m : methods)
    for (const auto& s : random_gmm_sweep(m, opt.profile))
      for (auto seed : opt.seeds) cells.push_back({s, seed});
  run_cells(0);

  auto mean_std = [](const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0};
  };
  auto collect = [&](const SweepSetting& s, TableRow& row) {
    std::vector<double> nmse, nnll, mse, ratio;
    row.failed_cells = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].setting.id() != s.id()) continue;
      if (summaries[i].failed || summaries[i].best_step < 0) {
        ++row.failed_cells;
        continue;
      }
      nmse.push_back(summaries[i].best.norm_mse);
      nnll.push_back(summaries[i].best.norm_nll);
      mse.push_back(summaries[i].best.mse);
      ratio.push_back(summaries[i].best.ratio);
    }
    row.best = s;
    row.n_seeds = static_cast<int>(nmse.size());
    if (nmse.empty()) {
      row.norm_nll = row.norm_mse = row.mse = row.ratio = std::nan("");
      return;
    }
    std::tie(row.norm_mse, row.norm_mse_std) = mean_std(nmse);
    std::tie(row.norm_nll, row.norm_nll_std) = mean_std(nnll);
    row.mse = mean_std(mse).first;
    row.ratio = mean_std(ratio).first;
  };

  std::vector<TableRow> rows;
  for (Method m : methods) {
    TableRow best;
    best.method = m;
    double best_score = std::numeric_limits<double>::infinity();
    for (const auto& s : random_gmm_sweep(m, opt.profile)) {
      TableRow row;
      row.method = m;
      collect(s, row);
      if (row.n_seeds > 0 && row.norm_mse < best_score) {
        best_score = row.norm_mse;
        best = row;
      }
    }
    if (!std::isfinite(best_score)) collect(random_gmm_sweep(m, opt.profile).front(), best);
    rows.push_back(best);
  }

  // The selected setting of each method is retrained with further seeds for the reported mean and std.
  const auto extra = random_gmm_confirm_seeds(opt);
  if (!extra.empty()) {
    const std::size_t from = cells.size();
    for (const auto& r : rows)
      if (r.n_seeds > 0)
        for (auto seed : extra) cells.push_back({r.best, seed});
    run_cells(from);
    for (auto& r : rows)
      if (r.n_seeds > 0) collect(r.best, r);
  }
  return rows;
}

// --- kernel and limit checks ---------------------------------------------------------

json KernelCheckReport::to_json() const {
  return {{"quadrature_rel_err", quadrature_rel_err},
          {"forward_reverse_max_abs_logit", fr_max_abs_logit},
          {"forward_reverse_mean_abs_logit", fr_mean_abs_logit},
          {"fold_ks", fold_ks},
          {"fold_symmetry_rel_err", fold_symmetry_rel_err}};
}

KernelCheckReport run_kernel_checks(const KernelCheckOptions& opt) {
  KernelCheckReport rep;
  const GmmTarget g = GmmTarget::gaussian(Vec::Constant(1, opt.target_mean), opt.target_std);
  const InterpolantMarginal pt(g, opt.t), ptp(g, opt.t_prime);
  const double lo = -10.0, hi = 10.0, h = (hi - lo) / (opt.nodes - 1);
  for (double xq = -2.0; xq <= 2.0; xq += 0.25) {
    double s = 0.0;
    for (int i = 0; i < opt.nodes; ++i) {
      const Vec x = Vec::Constant(1, lo + i * h);
      const double f = std::exp(pt.log_density(x) +
                                gaussian_logpdf(Vec::Constant(1, xq), noising_step(x, opt.t, opt.t_prime)));
      s += (i == 0 || i == opt.nodes - 1) ? 0.5 * f : f;
    }
    const double exact = std::exp(ptp.log_density(Vec::Constant(1, xq)));
    rep.quadrature_rel_err = std::max(rep.quadrature_rel_err, std::abs(s * h - exact) / exact);
  }

  // Logits of the true model under the oracle forward-reverse kernel, both step directions.
  const OracleModel truth(g);
  PerturbationKernel k;
  k.kind = KernelKind::kForwardReverse;
  const ScoreFn score = oracle_score(g);
  Rng rng = Rng(opt.seed).split(1);
  double sum = 0.0;
  for (int i = 0; i < opt.samples; ++i) {
    const double t = opt.t_lo + (opt.t_hi - opt.t_lo) * rng.uniform();
    const double tp = (i % 2 == 0) ? t - opt.dt : t + opt.dt;
    const InterpolantMarginal p(g, t);
    const Vec x = p.sample(1, rng).col(0);
    const Vec xp = kernel_sample(k, x, t, tp, score, rng);
    const double f = std::abs(stnce_logit(truth, x, t, xp, tp, k, score));
    rep.fr_max_abs_logit = std::max(rep.fr_max_abs_logit, f);
    sum += f;
  }
  rep.fr_mean_abs_logit = sum / opt.samples;

  Rng frng = Rng(opt.seed).split(2);
  for (double sigma : opt.fold_sigmas) {
    const TimeProposal prop{sigma, 0.0};
    std::vector<double> v(static_cast<std::size_t>(opt.samples));
    for (double& x : v) x = prop.sample(frng.uniform(), frng);
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double d = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
      d = std::max({d, std::abs((i + 1) / n - v[i]), std::abs(v[i] - i / n)});
    rep.fold_ks.push_back(d);
    for (int i = 0; i < 1000; ++i) {
      const double t = frng.uniform(), tp = frng.uniform();
      const double a = prop.density(t, tp), b = prop.density(tp, t);
      if (a > 0.0 || b > 0.0)
        rep.fold_symmetry_rel_err = std::max(rep.fold_symmetry_rel_err, std::abs(a - b) / std::max(a, b));
    }
  }
  return rep;
}

std::vector<LimitRow> run_limit_checks(const LimitConfig& cfg, const std::vector<double>& dt_grid, std::uint64_t seed) {
  Rng rng(seed);
  return limit_diagnostic_sde(cfg, dt_grid, rng);
}

// --- consistency ------------------------------------------------------------------

namespace {

struct FitOutcome {
  double sq_error = 0.0;
  bool converged = false;
};

FitOutcome fit_once(const ConsistencyOptions& opt, long n, Rng& rng) {
  const GmmTarget g = GmmTarget::gaussian(Vec::Constant(1, opt.true_mean), opt.true_std);
  PerturbationKernel k;
  k.sigma_white = opt.sigma_white;
  const LossSpec spec = LossSpec::for_method(opt.method, k);
  if (spec.kernel.kind == KernelKind::kForwardReverse && spec.needs_self_score())
    throw ConfigError("consistency check needs a method without self scores");
  const PairBatch b = sample_pairs_default(g, spec.kernel, static_cast<int>(n), rng, oracle_score(g));
  GaussianEnergyModel m(0.0, 0.0);
  const FitResult f = fit_full_batch(spec, m, b);
  const double dm = m.mean() - opt.true_mean, ds = m.log_std() - std::log(opt.true_std);
  return {dm * dm + ds * ds, f.converged};
}

}  // namespace

std::vector<ConsistencyRow> run_consistency(const ConsistencyOptions& opt) {
  std::vector<ConsistencyRow> rows;
  for (long n : opt.sizes) {
    ConsistencyRow row;
    row.n = n;
    for (int s = 0; s < opt.seeds; ++s) {
      Rng rng = Rng(opt.seed).split(static_cast<std::uint64_t>(n) * 1000 + static_cast<std::uint64_t>(s));
      const FitOutcome f = fit_once(opt, n, rng);
      row.errors.push_back(std::sqrt(f.sq_error));
      if (!f.converged) ++row.unconverged;
    }
    std::vector<double> sorted = row.errors;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    row.median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    rows.push_back(row);
  }
  return rows;
}

VarianceReport run_variance_check(const ConsistencyOptions& opt, long n, int fits, long mc_samples) {
  VarianceReport rep;
  rep.n = n;
  rep.fits = fits;
  double sum = 0.0;
  for (int i = 0; i < fits; ++i) {
    Rng rng = Rng(opt.seed).split(0x5eed0000ULL + static_cast<std::uint64_t>(i));
    const FitOutcome f = fit_once(opt, n, rng);
    sum += f.sq_error;
    if (!f.converged) ++rep.unconverged;
  }
  rep.empirical = static_cast<double>(n) * sum / fits;

  const GmmTarget g = GmmTarget::gaussian(Vec::Constant(1, opt.true_mean), opt.true_std);
  PerturbationKernel k;
  k.sigma_white = opt.sigma_white;
  const LossSpec spec = LossSpec::for_method(opt.method, k);
  Rng rng = Rng(opt.seed).split(0xc0ffeeULL);
  const PairBatch b = sample_pairs_default(g, spec.kernel, static_cast<int>(mc_samples), rng, oracle_score(g));
  const GaussianEnergyModel truth(opt.true_mean, std::log(opt.true_std));
  const AsymptoticVariance av = asymptotic_variance(truth, b, n, spec.pins_reference());
  rep.predicted = av.trace * static_cast<double>(n);
  rep.condition = av.condition;
  return rep;
}

// --- suite driver ----------------------------------------------------------------

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> n = {"failure_modes", "teaser_1d",   "random_gmm_table",
                                             "kernel_checks", "limit_checks", "consistency_check"};
  return n;
}

namespace {

std::string failure_report(const std::vector<FailureModeRow>& rows, std::string& csv) {
  csv = "point,mu1,mu2,multimodality,mismatch,method,seed,error,failed\n";
  std::string md = "| point | mu1 | mu2 | multimodality | mismatch | method | seed | 1-R^2 |\n|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d,%.2f,%.2f,%.6f,%.6f,%s,%llu,%.17g,%d\n", r.point, r.mu1, r.mu2,
                  r.multimodality, r.mismatch, to_string(r.method).c_str(), static_cast<unsigned long long>(r.seed),
                  r.error, r.failed ? 1 : 0);
    csv += buf;
    std::snprintf(buf, sizeof buf, "| %d | %.2f | %.2f | %.3f | %.3f | %s | %llu | %.4f%s |\n", r.point, r.mu1, r.mu2,
                  r.multimodality, r.mismatch, to_string(r.method).c_str(), static_cast<unsigned long long>(r.seed),
                  r.error, r.failed ? " (failed)" : "");
    md += buf;
  }
  return md;
}

std::string table_report(const std::vector<TableRow>& rows, std::string& csv) {
  csv = "method,lr,sigma_time,sigma_white,n_seeds,failed_cells,mse,ratio,norm_mse,norm_mse_std,norm_nll,norm_nll_std\n";
  std::string md = "| method | MSE | Ratio | NormMSE | NormNLL | best setting |\n|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%g,%g,%g,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  to_string(r.method).c_str(), r.best.lr, r.best.sigma_time, r.best.sigma_white, r.n_seeds,
                  r.failed_cells, r.mse, r.ratio, r.norm_mse, r.norm_mse_std, r.norm_nll, r.norm_nll_std);
    csv += buf;
    std::snprintf(buf, sizeof buf, "| %s | %.2f | %.2f | %.2f ± %.2f | %.2f ± %.2f | %s |\n", to_string(r.method).c_str(),
                  r.mse, r.ratio, r.norm_mse, r.norm_mse_std, r.norm_nll, r.norm_nll_std, r.best.id().c_str());
    md += buf;
  }
  return md;
}

}  // namespace

json run_suite(const std::string& name, const SuiteOptions& opt) {
  fs::create_directories(opt.out_dir);
  json summary = {{"suite", name}, {"profile", to_string(opt.profile)}, {"seeds", opt.seeds}};
  std::string md, csv;
  int failed = 0;
  if (name == "failure_modes") {
    const auto rows = run_failure_modes(opt);
    md = failure_report(rows, csv);
    for (const auto& r : rows) failed += r.failed;
  } else if (name == "teaser_1d") {
    summary["teaser"] = run_teaser_1d(opt);
    md = "Energies of each method at t = 1 are in energies.csv.\n";
    csv = "";
  } else if (name == "random_gmm_table") {
    const auto rows = run_random_gmm_table(opt);
    md = table_report(rows, csv);
    for (const auto& r : rows) failed += r.failed_cells;
  } else if (name == "kernel_checks") {
    KernelCheckOptions ko;
    if (opt.profile == Profile::kQuick) ko.samples = 10000;
    if (!opt.seeds.empty()) ko.seed = opt.seeds.front();
    const KernelCheckReport rep = run_kernel_checks(ko);
    summary["checks"] = rep.to_json();
    md = "```\n" + rep.to_json().dump(2) + "\n```\n";
  } else if (name == "limit_checks") {
    LimitConfig lc;
    if (opt.profile == Profile::kQuick) lc.samples = 100000;
    const auto rows = run_limit_checks(lc, {4e-3, 2e-3, 1e-3}, opt.seeds.empty() ? 0 : opt.seeds.front());
    csv = "dt,excess,excess_se,predicted,ratio\n";
    md = "| dt | excess | predicted | ratio |\n|---|---|---|---|\n";
    for (const auto& r : rows) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "%g,%.17g,%.17g,%.17g,%.17g\n", r.dt, r.excess, r.excess_se, r.predicted, r.ratio());
      csv += buf;
      std::snprintf(buf, sizeof buf, "| %g | %.4e | %.4e | %.4f |\n", r.dt, r.excess, r.predicted, r.ratio());
      md += buf;
    }
  } else if (name == "consistency_check") {
    ConsistencyOptions co;
    if (!opt.seeds.empty()) co.seed = opt.seeds.front();
    if (opt.profile == Profile::kQuick) co.sizes = {1000, 10000};
    const auto rows = run_consistency(co);
    csv = "n,median_error,unconverged,errors\n";
    md = "| N | median parameter error |\n|---|---|\n";
    for (const auto& r : rows) {
      std::string errs;
      for (double e : r.errors) errs += (errs.empty() ? "" : ";") + fmt("%.17g", e);
      csv += std::to_string(r.n) + "," + fmt("%.17g", r.median) + "," + std::to_string(r.unconverged) + "," + errs + "\n";
      md += "| " + std::to_string(r.n) + " | " + fmt("%.5f", r.median) + " |\n";
      failed += r.unconverged;
    }
  } else {
    throw ConfigError("unknown suite: " + name);
  }
  summary["failed_cells"] = failed;
  write_text(opt.out_dir / "report.md", "# " + name + "\n\n" + md);
  if (!csv.empty()) write_text(opt.out_dir / "report.csv", csv);
  write_text(opt.out_dir / "summary.json", summary.dump(2) + "\n");
  write_manifest(opt.out_dir, {{"kind", "suite"}, {"suite", name}, {"profile", to_string(opt.profile)}});
  return summary;
}

}  // namespace stnce
