#include "stnce/training.hpp"

#include "stnce/checkpoint.hpp"
#include "stnce/parametric.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

namespace stnce {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adam eps must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads, const AdamConfig& cfg) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw ContractError("adam_step: shape mismatch");
  for (double g : grads)
    if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    if (cfg.weight_decay > 0.0) params[i] -= cfg.lr * cfg.weight_decay * params[i];
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

GmmTarget TargetSpec::build() const {
  if (kind == "gmm") return GmmTarget(weights, means, stds);
  if (kind == "random_gmm") return GmmTarget::random(components, dim, comp_std, seed);
  if (kind == "failure_mode") {
    if (mu2 < mu1) throw ConfigError("failure_mode target needs mu2 >= mu1");
    return failure_mode_target({mu1, mu2}, comp_std);
  }
  throw ConfigError("unknown target kind: " + kind);
}

std::unique_ptr<EnergyModel> make_model(const ModelSpec& spec, int input_dim, Rng& rng) {
  if (spec.kind == "network") {
    Architecture arch = spec.arch;
    arch.input_dim = input_dim;
    arch.validate();
    return std::make_unique<EnergyNetwork>(arch, rng);
  }
  if (spec.kind == "gaussian") {
    if (input_dim != 1) throw ConfigError("gaussian model is one-dimensional");
    return std::make_unique<GaussianEnergyModel>(spec.init_mean, spec.init_log_std);
  }
  throw ConfigError("unknown model kind: " + spec.kind);
}

void RunConfig::validate() const {
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("ema_decay must lie in [0, 1)");
  if (eval_ema && ema_decay == 0.0) throw ConfigError("eval_ema requires ema_decay > 0");
  if (n_val < 2 || n_logz < 1) throw ConfigError("n_val must be >= 2 and n_logz >= 1");
  if (select_metric != "norm_mse" && select_metric != "mse" && select_metric != "norm_nll")
    throw ConfigError("select_metric must be norm_mse, mse or norm_nll");
  adam.validate();
  loss.validate();
  (void)target.build();
}

double ema_effective_decay(double decay, long step) {
  return std::min(decay, (1.0 + static_cast<double>(step)) / (10.0 + static_cast<double>(step)));
}

std::string metrics_csv(const std::vector<MetricsRecord>& records) {
  std::string out = std::string(kMetricsHeader) + "\n";
  char buf[512];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f\n", r.step, r.loss, r.mse, r.ratio,
                  r.norm_mse, r.norm_nll, r.wall_ms);
    out += buf;
  }
  return out;
}

std::unique_ptr<EnergyModel> model_from_parameters(const ModelSpec& spec, int input_dim,
                                                   std::span<const double> params) {
  Rng scratch(0);
  auto m = make_model(spec, input_dim, scratch);
  if (params.size() != m->num_parameters()) throw ContractError("model_from_parameters: size mismatch");
  std::copy(params.begin(), params.end(), m->parameters().begin());
  return m;
}

namespace {

double selection_value(const MetricsRecord& r, const std::string& metric) {
  if (metric == "mse") return r.mse;
  if (metric == "norm_nll") return r.norm_nll;
  return r.norm_mse;
}

void save_model(const std::filesystem::path& path, const EnergyModel& model, const ModelSpec& spec, long step) {
  if (const auto* net = dynamic_cast<const EnergyNetwork*>(&model)) {
    save_network(path, *net, step);
    return;
  }
  const auto p = model.parameters();
  nlohmann::json header = {{"model", spec.kind}, {"step", step}};
  write_checkpoint(path, header, {{"theta", 1, static_cast<int>(p.size()), std::vector<double>(p.begin(), p.end())}});
}

}  // namespace

TrainResult train(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
  };

  const Rng root(cfg.seed);
  Rng init_rng = root.split(1);
  Rng val_rng = root.split(2);
  Rng data_rng = root.split(3);

  const GmmTarget target = cfg.target.build();
  std::unique_ptr<EnergyModel> model = make_model(cfg.model, target.dim(), init_rng);
  const Points val_x = sample_target(target, cfg.n_val, val_rng);
  const Points logz_x = sample_target(target, cfg.n_logz, val_rng);

  ScoreFn score;
  if (cfg.loss.kernel.kind == KernelKind::kForwardReverse)
    score = cfg.loss.needs_self_score() ? self_score(*model) : oracle_score(target);

  const std::size_t np = model->num_parameters();
  AdamState adam(np);
  std::vector<double> grad(np, 0.0);
  std::vector<double> ema;
  if (cfg.ema_decay > 0.0) ema.assign(model->parameters().begin(), model->parameters().end());

  TrainResult result;
  double best_value = std::numeric_limits<double>::infinity();
  double loss_sum = 0.0;
  long loss_count = 0;

  auto evaluate = [&](long step) {
    std::unique_ptr<EnergyModel> ema_model;
    const EnergyModel* eval_model = model.get();
    if (cfg.eval_ema) {
      ema_model = model_from_parameters(cfg.model, target.dim(), ema);
      eval_model = ema_model.get();
    }
    MetricsRecord r = eval_metrics(*eval_model, target, val_x, logz_x);
    r.step = step;
    r.method = to_string(cfg.loss.method);
    if (loss_count > 0) {
      r.loss = loss_sum / static_cast<double>(loss_count);
    } else {
      Rng probe = root.split(4);
      r.loss = loss_value(cfg.loss, *model, sample_pairs(cfg.scheme, target, cfg.loss.kernel, cfg.batch_size, probe, score));
    }
    loss_sum = 0.0;
    loss_count = 0;
    r.wall_ms = cfg.record_wall_time ? elapsed_ms() : 0.0;
    if (!r.finite()) throw NumericError("evaluation produced non-finite metrics at step " + std::to_string(step));
    const double v = selection_value(r, cfg.select_metric);
    if (v < best_value) {
      best_value = v;
      result.best_step = step;
      result.best_index = result.records.size();
      result.best_model = model_from_parameters(cfg.model, target.dim(), eval_model->parameters());
    }
    result.records.push_back(r);
  };

  try {
    evaluate(0);
    for (long step = 1; step <= cfg.steps; ++step) {
      const PairBatch batch = sample_pairs(cfg.scheme, target, cfg.loss.kernel, cfg.batch_size, data_rng, score);
      const double loss = loss_and_gradient(cfg.loss, *model, batch, grad);
      if (!std::isfinite(loss)) throw NumericError("loss diverged at step " + std::to_string(step));
      adam_step(adam, model->parameters(), grad, cfg.adam);
      if (!ema.empty()) ema_update(ema, model->parameters(), ema_effective_decay(cfg.ema_decay, step));
      loss_sum += loss;
      ++loss_count;
      if (step % cfg.eval_every == 0 || step == cfg.steps) evaluate(step);
    }
  } catch (const NumericError& e) {
    result.failed = true;
    result.failure = e.what();
  } catch (const DomainError& e) {
    result.failed = true;
    result.failure = e.what();
  }

  result.params.assign(model->parameters().begin(), model->parameters().end());
  result.ema = ema;
  result.wall_ms = elapsed_ms();

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream(out_dir / "metrics.csv", std::ios::binary) << metrics_csv(result.records);
    if (cfg.checkpoints) {
      const long last = result.records.empty() ? 0 : result.records.back().step;
      save_model(out_dir / "final.ckpt", *model, cfg.model, last);
      if (!ema.empty()) save_model(out_dir / "ema.ckpt", *model_from_parameters(cfg.model, target.dim(), ema), cfg.model, last);
      if (result.best_model) save_model(out_dir / "best.ckpt", *result.best_model, cfg.model, result.best_step);
    }
  }
  return result;
}

FitResult fit_full_batch(const LossSpec& spec, EnergyModel& model, const PairBatch& batch, const FitOptions& opt) {
  const auto p = static_cast<Eigen::Index>(model.num_parameters());
  if (p == 0 || p > 16) throw ContractError("fit_full_batch: needs a small parametric family");
  auto theta = model.parameters();
  std::vector<double> g(static_cast<std::size_t>(p));
  auto grad_at = [&](Vec& out) {
    const double l = loss_and_gradient(spec, model, batch, g);
    out = Eigen::Map<const Vec>(g.data(), p);
    return l;
  };
  FitResult r;
  Vec grad;
  double loss = grad_at(grad);
  bool stalled = false;
  for (r.iterations = 0; r.iterations < opt.max_iters; ++r.iterations) {
    r.grad_norm = grad.norm();
    if (r.grad_norm < opt.grad_tol || stalled) {
      r.converged = true;
      break;
    }
    Mat h(p, p);
    Vec gp;
    Vec gm;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double keep = theta[static_cast<std::size_t>(j)];
      theta[static_cast<std::size_t>(j)] = keep + opt.fd_step;
      grad_at(gp);
      theta[static_cast<std::size_t>(j)] = keep - opt.fd_step;
      grad_at(gm);
      theta[static_cast<std::size_t>(j)] = keep;
      h.col(j) = (gp - gm) / (2.0 * opt.fd_step);
    }
    h = 0.5 * (h + h.transpose());
    Vec dir;
    Eigen::LLT<Mat> llt(h);
    if (llt.info() == Eigen::Success) {
      dir = -llt.solve(grad);
    } else {
      dir = -grad;
    }
    const Vec start = Eigen::Map<const Vec>(theta.data(), p);
    double step = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls, step *= 0.5) {
      Eigen::Map<Vec>(theta.data(), p) = start + step * dir;
      Vec trial_grad;
      const double trial = grad_at(trial_grad);
      if (std::isfinite(trial) && trial <= loss + 1e-4 * step * grad.dot(dir)) {
        stalled = loss - trial <= 1e-14 * (1.0 + std::abs(loss)) && trial_grad.norm() < 1e-6;
        loss = trial;
        grad = trial_grad;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      Eigen::Map<Vec>(theta.data(), p) = start;
      r.converged = r.grad_norm < 1e-6;
      break;
    }
  }
  r.loss = loss;
  r.grad_norm = grad.norm();
  if (r.grad_norm < opt.grad_tol) r.converged = true;
  return r;
}

}  // namespace stnce
