#include "stnce/losses.hpp"

#include "stnce/targets.hpp"

namespace stnce {

Method parse_method(const std::string& s) {
  for (Method m : all_methods())
    if (to_string(m) == s) return m;
  throw ConfigError("unknown loss method: " + s);
}

std::string to_string(Method m) {
  switch (m) {
    case Method::kNce: return "nce";
    case Method::kTnce: return "tnce";
    case Method::kTcnce: return "tcnce";
    case Method::kStnceM: return "stnce_m";
    case Method::kStnceW: return "stnce_w";
    case Method::kStnceS: return "stnce_s";
    case Method::kStnceO: return "stnce_o";
    case Method::kRneS: return "rne_s";
    case Method::kRneO: return "rne_o";
  }
  return "?";
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> m = {Method::kNce,    Method::kTnce,   Method::kTcnce,
                                        Method::kStnceM, Method::kStnceW, Method::kStnceS,
                                        Method::kStnceO, Method::kRneS,   Method::kRneO};
  return m;
}

namespace {

struct MethodRow {
  KernelKind kind;
  ScoreSource source;
};

MethodRow method_row(Method m) {
  switch (m) {
    case Method::kNce: return {KernelKind::kReferenceSwap, ScoreSource::kOracle};
    case Method::kTnce: return {KernelKind::kTimeOnly, ScoreSource::kOracle};
    case Method::kTcnce: return {KernelKind::kSpaceOnly, ScoreSource::kOracle};
    case Method::kStnceM: return {KernelKind::kMixture, ScoreSource::kOracle};
    case Method::kStnceW: return {KernelKind::kWhite, ScoreSource::kOracle};
    case Method::kStnceS:
    case Method::kRneS: return {KernelKind::kForwardReverse, ScoreSource::kSelf};
    case Method::kStnceO:
    case Method::kRneO: return {KernelKind::kForwardReverse, ScoreSource::kOracle};
  }
  throw ConfigError("unknown method");
}

}  // namespace

LossSpec LossSpec::for_method(Method m, PerturbationKernel base) {
  const MethodRow row = method_row(m);
  base.kind = row.kind;
  if (row.kind == KernelKind::kForwardReverse) base.score_source = row.source;
  return {m, base};
}

void LossSpec::validate() const {
  kernel.validate();
  const MethodRow row = method_row(method);
  if (kernel.kind != row.kind) {
    throw ConfigError("method " + to_string(method) + " requires kernel kind " + to_string(row.kind) + ", got " +
                      to_string(kernel.kind));
  }
  if (row.kind == KernelKind::kForwardReverse && kernel.score_source != row.source) {
    throw ConfigError("method " + to_string(method) + " requires score source " + to_string(row.source));
  }
}

double logistic_loss(const Vec& logits_a, const Vec& logits_b) {
  if (logits_a.size() == 0 || logits_b.size() == 0) throw ContractError("logistic_loss: empty class");
  double a = 0.0;
  for (double f : logits_a) a += softplus(-f);
  double b = 0.0;
  for (double f : logits_b) b += softplus(f);
  return a / static_cast<double>(logits_a.size()) + b / static_cast<double>(logits_b.size());
}

Vec batch_potential(const EnergyModel& model, const Points& x, const Vec& t, bool pin_reference) {
  Vec u = model.potential(x, t);
  if (pin_reference)
    for (Eigen::Index i = 0; i < t.size(); ++i)
      if (t[i] == 0.0) u[i] = -std_normal_logpdf(x.col(i));
  return u;
}

Vec stnce_logits(const EnergyModel& model, const PairBatch& batch, bool pin_reference) {
  batch.check();
  return -batch_potential(model, batch.x, batch.t, pin_reference) +
         batch_potential(model, batch.xp, batch.tp, pin_reference) + batch.correction;
}

double stnce_logit(const EnergyModel& model, const Eigen::Ref<const Vec>& x, double t,
                   const Eigen::Ref<const Vec>& xp, double tp, const PerturbationKernel& kernel,
                   const ScoreFn& score, bool pin_reference) {
  PairBatch b;
  b.x = x;
  b.xp = xp;
  b.t = Vec::Constant(1, t);
  b.tp = Vec::Constant(1, tp);
  Branch br = Branch::kBoth;
  if (kernel.kind == KernelKind::kMixture) br = tp == t ? Branch::kSpaceOnly : Branch::kTimeOnly;
  if (kernel.has_space_dirac()) br = Branch::kTimeOnly;
  if (kernel.kind == KernelKind::kSpaceOnly) br = Branch::kSpaceOnly;
  b.branch = {br};
  if (t == tp && x == xp) {
    b.correction = Vec::Zero(1);
  } else {
    b.correction = kernel_log_ratio(kernel, b.x, b.t, b.xp, b.tp, b.branch, score);
  }
  return stnce_logits(model, b, pin_reference)[0];
}

namespace {

double reduce_loss(const LossSpec& spec, const Vec& f, Vec* d_f) {
  const auto n = static_cast<double>(f.size());
  if (f.size() == 0) throw ContractError("loss: empty batch");
  if (!f.allFinite()) throw NumericError("loss: non-finite logits");
  double loss = 0.0;
  if (d_f) d_f->resize(f.size());
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    if (spec.is_rne()) {
      loss += f[i] * f[i];
      if (d_f) (*d_f)[i] = 2.0 * f[i] / n;
    } else {
      loss += 2.0 * softplus(-f[i]);
      if (d_f) (*d_f)[i] = -2.0 * sigmoid(-f[i]) / n;
    }
  }
  return loss / n;
}

}  // namespace

double loss_value(const LossSpec& spec, const EnergyModel& model, const PairBatch& batch) {
  return reduce_loss(spec, stnce_logits(model, batch, spec.pins_reference()), nullptr);
}

double loss_and_gradient(const LossSpec& spec, const EnergyModel& model, const PairBatch& batch,
                         std::span<double> grad) {
  if (grad.size() != model.num_parameters()) throw ContractError("loss_and_gradient: gradient size mismatch");
  batch.check();
  std::fill(grad.begin(), grad.end(), 0.0);
  const bool pin = spec.pins_reference();
  const Eigen::Index n = batch.size();
  Points pts(batch.x.rows(), 2 * n);
  pts << batch.x, batch.xp;
  Vec ts(2 * n);
  ts << batch.t, batch.tp;

  // F = -U(x,t) + U(x',t') + c, so dL/dU(x,t) = -dL/dF and dL/dU(x',t') = dL/dF.
  // Pinned reference endpoints carry no parameters.
  double loss = 0.0;
  auto upstream = [&](const Vec& u_model) {
    Vec u = u_model;
    if (pin)
      for (Eigen::Index i = 0; i < 2 * n; ++i)
        if (ts[i] == 0.0) u[i] = -std_normal_logpdf(pts.col(i));
    const Vec f = -u.head(n) + u.tail(n) + batch.correction;
    Vec d_f;
    loss = reduce_loss(spec, f, &d_f);
    Vec w(2 * n);
    w << -d_f, d_f;
    if (pin)
      for (Eigen::Index i = 0; i < 2 * n; ++i)
        if (ts[i] == 0.0) w[i] = 0.0;
    return w;
  };
  Vec u;
  model.potential_and_gradient(pts, ts, u, upstream, grad);
  return loss;
}

SpecialCaseLogits reduce_to_special_case(Method method, const EnergyModel& model, const PairBatch& batch,
                                         Eigen::Index i, const PerturbationKernel& kernel) {
  if (i < 0 || i >= batch.size()) throw ContractError("reduce_to_special_case: row out of range");
  const PairBatch row = batch.slice(i, 1);
  const Vec x = row.x.col(0);
  const Vec xp = row.xp.col(0);
  const double t = row.t[0];
  const double tp = row.tp[0];
  auto u = [&](const Vec& p, double s) { return model.potential_at(p, s); };
  SpecialCaseLogits out;
  switch (method) {
    case Method::kNce: {
      if (x != xp || !((t == 0.0 && tp == 1.0) || (t == 1.0 && tp == 0.0)))
        throw ContractError("nce tuple must be (x, t, x, 1 - t) with t in {0, 1}");
      out.generic = stnce_logits(model, row, true)[0];
      const double nce = -u(x, 1.0) - std_normal_logpdf(x);  // log p_theta(x|1) - log p_0(x)
      out.specific = t == 1.0 ? nce : -nce;
      return out;
    }
    case Method::kTnce: {
      if (x != xp) throw ContractError("tnce tuple must keep x fixed");
      out.generic = stnce_logits(model, row, false)[0];
      const double delta = std::log(kernel.proposal.density(t, tp)) - std::log(kernel.proposal.density(tp, t));
      out.specific = -u(x, t) + u(x, tp) + delta;
      return out;
    }
    case Method::kTcnce: {
      if (t != tp) throw ContractError("tcnce tuple must keep t fixed");
      out.generic = stnce_logits(model, row, false)[0];
      const double s2 = kernel.sigma_white * kernel.sigma_white;
      const double fwd = -0.5 * (x.size() * std::log(2.0 * std::numbers::pi * s2) + (xp - x).squaredNorm() / s2);
      const double rev = -0.5 * (x.size() * std::log(2.0 * std::numbers::pi * s2) + (x - xp).squaredNorm() / s2);
      out.specific = -u(x, t) + u(xp, t) + fwd - rev;
      return out;
    }
    default: throw ContractError("reduce_to_special_case: no closed form for " + to_string(method));
  }
}

std::vector<LimitRow> limit_diagnostic_sde(const LimitConfig& cfg, const std::vector<double>& dt_grid, Rng& rng) {
  if (cfg.samples < 2) throw ConfigError("limit diagnostic needs at least 2 samples");
  if (!(cfg.t_lo > 0.0 && cfg.t_hi <= 1.0 && cfg.t_lo < cfg.t_hi)) throw ConfigError("limit diagnostic: bad t range");
  const GmmTarget target = GmmTarget::gaussian(Vec::Constant(1, cfg.target_mean), cfg.target_std);
  auto delta = [&](double x) { return cfg.amplitude * std::sin(cfg.omega * x); };
  auto delta_x = [&](double x) { return cfg.amplitude * cfg.omega * std::cos(cfg.omega * x); };
  auto log_p = [&](double x, double t) { return InterpolantMarginal(target, t).log_density(Vec::Constant(1, x)); };

  std::vector<LimitRow> rows;
  for (double dt : dt_grid) {
    if (!(dt > 0.0 && dt < cfg.t_lo)) throw ConfigError("limit diagnostic: dt must lie in (0, t_lo)");
    Rng r = rng.split(static_cast<std::uint64_t>(std::llround(1e12 * dt)));
    double sum = 0.0;
    double sum2 = 0.0;
    double pred = 0.0;
    for (long i = 0; i < cfg.samples; ++i) {
      const double t1 = cfg.t_lo + (cfg.t_hi - cfg.t_lo) * r.uniform();
      const double t0 = t1 - dt;
      const double z = cfg.target_mean + cfg.target_std * r.normal();
      const double x1 = (1.0 - t1) * r.normal() + t1 * z;
      const GaussianStep g = noising_step(Vec::Constant(1, x1), t1, t0);
      const double x0 = g.mean[0] + std::sqrt(g.var) * r.normal();
      // Exact reverse transition by Bayes: log p_rev(x1|x0) = log p_n(x0|x1) + log p_t1(x1) - log p_t0(x0).
      const double lp1 = log_p(x1, t1);
      const double lp0 = log_p(x0, t0);
      const double correction = lp0 - lp1;
      const double u1 = -lp1 + delta(x1);
      const double u0 = -lp0 + delta(x0);
      const double f = -u1 + u0 + correction;
      const double a = std::abs(f);
      const double e = a + 2.0 * std::log1p(std::exp(-a)) - kTwoLog2;
      sum += e;
      sum2 += e * e;
      const double dx = delta_x(x1);
      pred += 2.0 * (1.0 - t1) / t1 * dx * dx;
    }
    const auto n = static_cast<double>(cfg.samples);
    LimitRow row;
    row.dt = dt;
    row.excess = sum / n;
    row.excess_se = std::sqrt(std::max(sum2 / n - row.excess * row.excess, 0.0) / n);
    row.predicted = dt / 4.0 * pred / n;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace stnce
