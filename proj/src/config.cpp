#include "stnce/config.hpp"

#include "stnce/checkpoint.hpp"

#include <fstream>
#include <set>

namespace stnce {

using nlohmann::json;

namespace {

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    (void)v;
    if (!ok.count(k)) throw ConfigError("unknown key " + where + "." + k);
  }
}

template <class T>
T get(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("key ") + key + " has the wrong type");
  }
}

Mat matrix_from(const json& rows, const char* what) {
  if (!rows.is_array() || rows.empty()) throw ConfigError(std::string(what) + " must be a non-empty list of lists");
  const auto k = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows[0].size());
  Mat m(d, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto& r = rows[static_cast<std::size_t>(c)];
    if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != d) throw ConfigError(std::string(what) + ": ragged rows");
    for (Eigen::Index i = 0; i < d; ++i) m(i, c) = r[static_cast<std::size_t>(i)].get<double>();
  }
  return m;
}

json matrix_to(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    json r = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) r.push_back(m(i, c));
    rows.push_back(r);
  }
  return rows;
}

TargetSpec target_from(const json& j) {
  TargetSpec t;
  t.kind = get<std::string>(j, "kind", t.kind);
  if (t.kind == "gmm") {
    only_keys(j, "target", {"kind", "weights", "means", "stds"});
    const auto w = get<std::vector<double>>(j, "weights", {});
    t.weights = Eigen::Map<const Vec>(w.data(), static_cast<Eigen::Index>(w.size()));
    t.means = matrix_from(j.at("means"), "target.means");
    if (j.contains("stds") && j.at("stds").is_number()) {
      t.stds = Mat::Constant(t.means.rows(), t.means.cols(), j.at("stds").get<double>());
    } else {
      t.stds = matrix_from(j.at("stds"), "target.stds");
    }
  } else if (t.kind == "random_gmm") {
    only_keys(j, "target", {"kind", "K", "dim", "comp_std", "seed"});
    t.components = get<int>(j, "K", t.components);
    t.dim = get<int>(j, "dim", t.dim);
    t.comp_std = get<double>(j, "comp_std", t.comp_std);
    t.seed = get<std::uint64_t>(j, "seed", t.seed);
  } else if (t.kind == "failure_mode") {
    only_keys(j, "target", {"kind", "mu1", "mu2", "comp_std"});
    t.mu1 = get<double>(j, "mu1", t.mu1);
    t.mu2 = get<double>(j, "mu2", t.mu2);
    t.comp_std = get<double>(j, "comp_std", kFailureComponentStd);
  } else {
    throw ConfigError("unknown target kind: " + t.kind);
  }
  return t;
}

json target_to(const TargetSpec& t) {
  if (t.kind == "gmm") {
    return {{"kind", "gmm"},
            {"weights", std::vector<double>(t.weights.data(), t.weights.data() + t.weights.size())},
            {"means", matrix_to(t.means)},
            {"stds", matrix_to(t.stds)}};
  }
  if (t.kind == "random_gmm")
    return {{"kind", "random_gmm"}, {"K", t.components}, {"dim", t.dim}, {"comp_std", t.comp_std}, {"seed", t.seed}};
  return {{"kind", "failure_mode"}, {"mu1", t.mu1}, {"mu2", t.mu2}, {"comp_std", t.comp_std}};
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  only_keys(j, "config",
            {"name", "seed", "target", "model", "loss", "kernel", "proposal", "scheme", "batch_size", "steps",
             "eval_every", "optimizer", "ema_decay", "eval_ema", "n_val", "n_logz", "select_metric",
             "record_wall_time", "checkpoints"});
  RunConfig c;
  try {
    c.name = get<std::string>(j, "name", c.name);
    c.seed = get<std::uint64_t>(j, "seed", c.seed);
    if (!j.contains("target")) throw ConfigError("missing key target");
    c.target = target_from(j.at("target"));

    const json model = j.value("model", json::object());
    c.model.kind = get<std::string>(model, "kind", c.model.kind);
    if (c.model.kind == "network") {
      only_keys(model, "model",
                {"kind", "time_embed_dim", "hidden_dim", "expansion_dim", "n_blocks", "time_max_freq", "logz_head",
                 "logz_width"});
      json arch = model;
      arch.erase("kind");
      c.model.arch = architecture_from_json(arch);
    } else if (c.model.kind == "gaussian") {
      only_keys(model, "model", {"kind", "init_mean", "init_log_std"});
      c.model.init_mean = get<double>(model, "init_mean", 0.0);
      c.model.init_log_std = get<double>(model, "init_log_std", 0.0);
    } else {
      throw ConfigError("unknown model kind: " + c.model.kind);
    }

    const json loss = j.value("loss", json::object());
    only_keys(loss, "loss", {"method"});
    const Method method = parse_method(get<std::string>(loss, "method", "stnce_w"));

    PerturbationKernel k;
    const json kernel = j.value("kernel", json::object());
    only_keys(kernel, "kernel", {"kind", "sigma_white", "score_source", "denoise_variant", "t_min"});
    k.sigma_white = get<double>(kernel, "sigma_white", k.sigma_white);
    k.denoise_variant = parse_denoise_variant(get<std::string>(kernel, "denoise_variant", "seeds1"));
    k.t_min = get<double>(kernel, "t_min", k.t_min);
    const json proposal = j.value("proposal", json::object());
    only_keys(proposal, "proposal", {"sigma_time", "t_min_gap"});
    k.proposal.sigma_time = get<double>(proposal, "sigma_time", k.proposal.sigma_time);
    k.proposal.t_min_gap = get<double>(proposal, "t_min_gap", k.proposal.t_min_gap);
    c.loss = LossSpec::for_method(method, k);
    // Explicit kernel kind / score source must agree with the method.
    if (kernel.contains("kind")) c.loss.kernel.kind = parse_kernel_kind(get<std::string>(kernel, "kind", ""));
    if (kernel.contains("score_source"))
      c.loss.kernel.score_source = parse_score_source(get<std::string>(kernel, "score_source", ""));

    c.scheme = parse_scheme(get<std::string>(j, "scheme", "default"));
    c.batch_size = get<int>(j, "batch_size", c.batch_size);
    c.steps = get<long>(j, "steps", c.steps);
    c.eval_every = get<long>(j, "eval_every", c.eval_every);

    const json opt = j.value("optimizer", json::object());
    only_keys(opt, "optimizer", {"learning_rate", "beta1", "beta2", "eps", "weight_decay"});
    c.adam.lr = get<double>(opt, "learning_rate", c.adam.lr);
    c.adam.beta1 = get<double>(opt, "beta1", c.adam.beta1);
    c.adam.beta2 = get<double>(opt, "beta2", c.adam.beta2);
    c.adam.eps = get<double>(opt, "eps", c.adam.eps);
    c.adam.weight_decay = get<double>(opt, "weight_decay", c.adam.weight_decay);

    c.ema_decay = get<double>(j, "ema_decay", c.ema_decay);
    c.eval_ema = get<bool>(j, "eval_ema", c.eval_ema);
    c.n_val = get<int>(j, "n_val", c.n_val);
    c.n_logz = get<int>(j, "n_logz", c.n_logz);
    c.select_metric = get<std::string>(j, "select_metric", c.select_metric);
    c.record_wall_time = get<bool>(j, "record_wall_time", c.record_wall_time);
    c.checkpoints = get<bool>(j, "checkpoints", c.checkpoints);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

json run_config_to_json(const RunConfig& c) {
  json model;
  if (c.model.kind == "network") {
    model = architecture_to_json(c.model.arch);
    model.erase("input_dim");
    model["kind"] = "network";
  } else {
    model = {{"kind", c.model.kind}, {"init_mean", c.model.init_mean}, {"init_log_std", c.model.init_log_std}};
  }
  const PerturbationKernel& k = c.loss.kernel;
  return {{"name", c.name},
          {"seed", c.seed},
          {"target", target_to(c.target)},
          {"model", model},
          {"loss", {{"method", to_string(c.loss.method)}}},
          {"kernel",
           {{"kind", to_string(k.kind)},
            {"sigma_white", k.sigma_white},
            {"score_source", to_string(k.score_source)},
            {"denoise_variant", to_string(k.denoise_variant)},
            {"t_min", k.t_min}}},
          {"proposal", {{"sigma_time", k.proposal.sigma_time}, {"t_min_gap", k.proposal.t_min_gap}}},
          {"scheme", to_string(c.scheme)},
          {"batch_size", c.batch_size},
          {"steps", c.steps},
          {"eval_every", c.eval_every},
          {"optimizer",
           {{"learning_rate", c.adam.lr},
            {"beta1", c.adam.beta1},
            {"beta2", c.adam.beta2},
            {"eps", c.adam.eps},
            {"weight_decay", c.adam.weight_decay}}},
          {"ema_decay", c.ema_decay},
          {"eval_ema", c.eval_ema},
          {"n_val", c.n_val},
          {"n_logz", c.n_logz},
          {"select_metric", c.select_metric},
          {"record_wall_time", c.record_wall_time},
          {"checkpoints", c.checkpoints}};
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(is, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError("config parse error: " + std::string(e.what()));
  }
  return run_config_from_json(j);
}

const char* run_config_schema() {
  return R"(run config (JSON, comments allowed; unknown keys are rejected)
  name             string               run label
  seed             uint                 master seed; every stream derives from it
  target           object, required     {kind: "gmm", weights, means: [[..]..], stds: number | [[..]..]}
                                        {kind: "random_gmm", K, dim, comp_std, seed}
                                        {kind: "failure_mode", mu1, mu2, comp_std}
  model            object               {kind: "network", time_embed_dim, hidden_dim, expansion_dim, n_blocks,
                                         time_max_freq, logz_head, logz_width}
                                        {kind: "gaussian", init_mean, init_log_std}   (1-D only)
  loss.method      nce | tnce | tcnce | stnce_m | stnce_w | stnce_s | stnce_o | rne_s | rne_o
  kernel           {kind, sigma_white, score_source: oracle|self, denoise_variant: seeds1|recovery, t_min}
                   kind and score_source default to the method's and must match it when given
  proposal         {sigma_time: -1 (uniform) or > 0, t_min_gap}
  scheme           default | reuse      reuse emits two tuples per clean datum
  batch_size       int >= 2             clean data per step
  steps            int >= 1
  eval_every       int >= 1
  optimizer        {learning_rate, beta1, beta2, eps, weight_decay}
  ema_decay        [0, 1)               0 disables EMA
  eval_ema         bool                 evaluate and select with EMA weights
  n_val, n_logz    int                  validation and log Z1 sample counts
  select_metric    norm_mse | mse | norm_nll
  record_wall_time bool                 write measured wall time into metrics.csv
  checkpoints      bool                 write final/best/ema checkpoints
)";
}

}  // namespace stnce
