#include "stnce/config.hpp"
#include "stnce/suites.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stnce;

namespace {

constexpr int kStatusConfig = 2;
constexpr int kStatusDiverged = 3;

void write_json(const fs::path& p, const json& j) {
  std::ofstream os(p, std::ios::binary);
  os << j.dump(2) << "\n";
}

int cmd_run(const std::string& config_path, std::string out) {
  const RunConfig cfg = load_run_config(config_path);
  const fs::path dir = out.empty() ? fs::path("runs") / cfg.name : fs::path(out);
  fs::create_directories(dir);
  write_json(dir / "config.json", run_config_to_json(cfg));
  const TrainResult r = train(cfg, dir);
  json summary = {{"name", cfg.name}, {"failed", r.failed}, {"failure", r.failure}, {"best_step", r.best_step}};
  if (!r.records.empty()) {
    const auto& b = r.records[r.best_index];
    summary["best"] = {{"step", b.step},         {"loss", b.loss},         {"mse", b.mse},
                       {"ratio", b.ratio},       {"norm_mse", b.norm_mse}, {"norm_nll", b.norm_nll},
                       {"logz_hat", b.logz_hat}};
  }
  if (cfg.record_wall_time) summary["wall_ms"] = r.wall_ms;
  write_json(dir / "run_summary.json", summary);
  write_manifest(dir, {{"kind", "run"}, {"name", cfg.name}});
  if (r.failed) {
    std::cerr << "training diverged: " << r.failure << "\n";
    return kStatusDiverged;
  }
  std::cout << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stNCE energy-model training and experiment suites"};
  app.require_subcommand(1);

  std::string config_path, out;
  auto* run = app.add_subcommand("run", "train one config");
  run->add_option("config", config_path, "JSON run config")->required();
  run->add_option("--out", out, "output directory (default runs/<name>)");

  std::string suite_name, profile = "full";
  bool quick = false;
  std::vector<std::string> methods;
  std::vector<std::uint64_t> seeds;
  std::vector<int> points;
  auto* suite = app.add_subcommand("suite", "run a packaged experiment sweep");
  suite->add_option("name", suite_name, "suite name")->required()->check(CLI::IsMember(suite_names()));
  suite->add_option("--profile", profile, "quick | desk | full")->check(CLI::IsMember({"quick", "desk", "full"}));
  suite->add_flag("--quick", quick, "same as --profile quick");
  suite->add_option("--methods", methods, "methods to run")->delimiter(',');
  suite->add_option("--seeds", seeds, "seeds")->delimiter(',');
  suite->add_option("--points", points, "failure-mode grid indices")->delimiter(',');
  suite->add_option("--out", out, "output directory (default runs/<suite>)");

  bool schema = false;
  auto* validate = app.add_subcommand("validate-config", "check a run config");
  validate->add_option("config", config_path, "JSON run config");
  validate->add_flag("--schema", schema, "print the accepted keys");

  KernelCheckOptions kopt;
  auto* kcheck = app.add_subcommand("kernel-check", "quadrature, forward-reverse and folding checks");
  kcheck->add_option("--samples", kopt.samples);
  kcheck->add_option("--seed", kopt.seed);

  LimitConfig lopt;
  std::vector<double> dts{4e-3, 2e-3, 1e-3};
  std::uint64_t lseed = 0;
  auto* lcheck = app.add_subcommand("limit-check", "small-step excess loss against its prediction");
  lcheck->add_option("--samples", lopt.samples);
  lcheck->add_option("--dt", dts)->delimiter(',');
  lcheck->add_option("--seed", lseed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kStatusConfig;
  }

  try {
    if (*run) return cmd_run(config_path, out);

    if (*suite) {
      SuiteOptions opt;
      opt.profile = quick ? Profile::kQuick : parse_profile(profile);
      opt.out_dir = out.empty() ? fs::path("runs") / suite_name : fs::path(out);
      opt.workers = workers_from_env();
      if (!seeds.empty()) opt.seeds = seeds;
      for (const auto& m : methods) opt.methods.push_back(parse_method(m));
      opt.grid_points = points;
      opt.log = [](const std::string& s) { std::cerr << s << "\n"; };
      const json summary = run_suite(suite_name, opt);
      std::cout << (opt.out_dir / "report.md").string() << "\n";
      return 0;
    }

    if (*validate) {
      if (schema) {
        std::cout << run_config_schema();
        return 0;
      }
      if (config_path.empty()) throw ConfigError("no config given");
      const RunConfig cfg = load_run_config(config_path);
      std::cout << run_config_to_json(cfg).dump(2) << "\n";
      return 0;
    }

    if (*kcheck) {
      std::cout << run_kernel_checks(kopt).to_json().dump(2) << "\n";
      return 0;
    }

    if (*lcheck) {
      json rows = json::array();
      for (const auto& r : run_limit_checks(lopt, dts, lseed))
        rows.push_back({{"dt", r.dt}, {"excess", r.excess}, {"excess_se", r.excess_se}, {"predicted", r.predicted},
                        {"ratio", r.ratio()}});
      std::cout << rows.dump(2) << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kStatusConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
