#include "stnce/kernels.hpp"

namespace stnce {

KernelKind parse_kernel_kind(const std::string& s) {
  if (s == "reference_swap") return KernelKind::kReferenceSwap;
  if (s == "time_only") return KernelKind::kTimeOnly;
  if (s == "space_only") return KernelKind::kSpaceOnly;
  if (s == "mixture") return KernelKind::kMixture;
  if (s == "white") return KernelKind::kWhite;
  if (s == "forward_reverse") return KernelKind::kForwardReverse;
  throw ConfigError("unknown kernel kind: " + s);
}

std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::kReferenceSwap: return "reference_swap";
    case KernelKind::kTimeOnly: return "time_only";
    case KernelKind::kSpaceOnly: return "space_only";
    case KernelKind::kMixture: return "mixture";
    case KernelKind::kWhite: return "white";
    case KernelKind::kForwardReverse: return "forward_reverse";
  }
  return "?";
}

ScoreSource parse_score_source(const std::string& s) {
  if (s == "oracle") return ScoreSource::kOracle;
  if (s == "self") return ScoreSource::kSelf;
  throw ConfigError("unknown score source: " + s);
}

std::string to_string(ScoreSource s) { return s == ScoreSource::kOracle ? "oracle" : "self"; }

DenoiseVariant parse_denoise_variant(const std::string& s) {
  if (s == "seeds1") return DenoiseVariant::kSeeds1;
  if (s == "recovery") return DenoiseVariant::kRecovery;
  throw ConfigError("unknown denoise variant: " + s);
}

std::string to_string(DenoiseVariant d) { return d == DenoiseVariant::kSeeds1 ? "seeds1" : "recovery"; }

void PerturbationKernel::validate() const {
  if (!(sigma_white > 0.0)) throw ConfigError("kernel.sigma_white must be positive");
  if (!(t_min > 0.0 && t_min < 0.5)) throw ConfigError("kernel.t_min must lie in (0, 0.5)");
  proposal.validate();
}

ScoreFn oracle_score(const GmmTarget& target) {
  return [&target](const Points& x, const Vec& t) { return marginal_space_score(target, x, t); };
}

ScoreFn self_score(const EnergyModel& model) {
  return [&model](const Points& x, const Vec& t) { return model.space_score(x, t); };
}

GaussianStep noising_step(const Eigen::Ref<const Vec>& x, double t, double t_prime) {
  if (!(t > 0.0) || t_prime > t || t_prime < 0.0) throw DomainError("noising step requires 0 <= t' <= t, t > 0");
  const double r = t_prime / t;
  const double var = (1.0 - t_prime) * (1.0 - t_prime) - r * r * (1.0 - t) * (1.0 - t);
  return {r * x, std::max(var, 0.0)};
}

GaussianStep seeds1_step(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& score, double t,
                         double t_prime) {
  if (!(t > 0.0) || t_prime < t || t_prime > 1.0) throw DomainError("denoising step requires 0 < t <= t' <= 1");
  const double h = t_prime - t;
  Vec mean = (t_prime / t) * x + (2.0 * (1.0 - t) * h / t) * score;
  const double var = h * (t + t_prime - 2.0 * t * t_prime) / (t * t);
  return {std::move(mean), std::max(var, 0.0)};
}

GaussianStep recovery_kernel(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& score, double t,
                             double t_prime) {
  if (!(t > 0.0) || t_prime < t || t_prime > 1.0) throw DomainError("recovery kernel requires 0 < t <= t' <= 1");
  const double a = t / t_prime;
  const double b2 = std::max((1.0 - t) * (1.0 - t) - a * a * (1.0 - t_prime) * (1.0 - t_prime), 0.0);
  Vec mean = x / a + (b2 / (a * a)) * score;
  return {std::move(mean), b2 / (a * a)};
}

GaussianStep forward_reverse_step(const PerturbationKernel& k, const Eigen::Ref<const Vec>& x,
                                  const Eigen::Ref<const Vec>& score, double t, double t_prime) {
  if (std::min(t, t_prime) < k.t_min) throw DomainError("forward-reverse kernel: time below t_min");
  if (t_prime <= t) return noising_step(x, t, t_prime);
  return k.denoise_variant == DenoiseVariant::kSeeds1 ? seeds1_step(x, score, t, t_prime)
                                                      : recovery_kernel(x, score, t, t_prime);
}

double gaussian_logpdf(const Eigen::Ref<const Vec>& y, const GaussianStep& g) {
  const double d2 = (y - g.mean).squaredNorm();
  if (g.var <= 0.0) return d2 == 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  return -0.5 * (static_cast<double>(y.size()) * (kLog2Pi + std::log(g.var)) + d2 / g.var);
}

namespace {

double dirac_logpdf(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& xp) {
  return x == xp ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
}

Vec column_score(const ScoreFn& score, const Eigen::Ref<const Vec>& x, double t) {
  Points p = x;
  Vec tt = Vec::Constant(1, t);
  return score(p, tt).col(0);
}

}  // namespace

double kernel_time(const PerturbationKernel& k, double t, Branch branch, Rng& rng) {
  switch (k.kind) {
    case KernelKind::kReferenceSwap: return 1.0 - t;
    case KernelKind::kSpaceOnly: return t;
    case KernelKind::kMixture:
      if (branch == Branch::kSpaceOnly) return t;
      return k.proposal.sample(t, rng);
    default: return k.proposal.sample(t, rng);
  }
}

Vec kernel_sample(const PerturbationKernel& k, const Eigen::Ref<const Vec>& x, double t, double t_prime,
                  const ScoreFn& score, Rng& rng) {
  auto noise = [&](double sd) {
    Vec out = x;
    for (Eigen::Index j = 0; j < out.size(); ++j) out[j] += sd * rng.normal();
    return out;
  };
  switch (k.kind) {
    case KernelKind::kReferenceSwap:
    case KernelKind::kTimeOnly: return x;
    case KernelKind::kSpaceOnly:
    case KernelKind::kWhite: return noise(k.sigma_white);
    case KernelKind::kMixture: return t_prime == t ? noise(k.sigma_white) : Vec(x);
    case KernelKind::kForwardReverse: {
      Vec s = t_prime > t ? column_score(score, x, t) : Vec::Zero(x.size());
      GaussianStep g = forward_reverse_step(k, x, s, t, t_prime);
      Vec out = g.mean;
      const double sd = std::sqrt(g.var);
      for (Eigen::Index j = 0; j < out.size(); ++j) out[j] += sd * rng.normal();
      return out;
    }
  }
  throw ContractError("kernel_sample: unknown kind");
}

double kernel_logpdf(const PerturbationKernel& k, const Eigen::Ref<const Vec>& x, double t,
                     const Eigen::Ref<const Vec>& x_prime, double t_prime, const ScoreFn& score) {
  if (x.size() != x_prime.size()) throw ContractError("kernel_logpdf: dimension mismatch");
  switch (k.kind) {
    case KernelKind::kReferenceSwap:
    case KernelKind::kTimeOnly: return dirac_logpdf(x, x_prime);
    case KernelKind::kSpaceOnly:
    case KernelKind::kWhite: return gaussian_logpdf(x_prime, {x, k.sigma_white * k.sigma_white});
    case KernelKind::kMixture: throw ContractError("kernel_logpdf: mixture Dirac components are symbolic");
    case KernelKind::kForwardReverse: {
      Vec s = t_prime > t ? column_score(score, x, t) : Vec::Zero(x.size());
      return gaussian_logpdf(x_prime, forward_reverse_step(k, x, s, t, t_prime));
    }
  }
  throw ContractError("kernel_logpdf: unknown kind");
}

Vec kernel_log_ratio(const PerturbationKernel& k, const Points& x, const Vec& t, const Points& xp, const Vec& tp,
                     const std::vector<Branch>& branch, const ScoreFn& score) {
  const Eigen::Index n = t.size();
  if (x.cols() != n || xp.cols() != n || tp.size() != n || static_cast<Eigen::Index>(branch.size()) != n) {
    throw ContractError("kernel_log_ratio: shape mismatch");
  }
  Vec out = Vec::Zero(n);
  if (k.kind == KernelKind::kForwardReverse) {
    Points lo(x.rows(), n);
    Vec tlo(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (t[i] == tp[i]) throw ContractError("forward-reverse tuple with t' = t has no density ratio");
      lo.col(i) = t[i] < tp[i] ? x.col(i) : xp.col(i);
      tlo[i] = std::min(t[i], tp[i]);
    }
    if ((tlo.array() < k.t_min).any()) throw DomainError("forward-reverse kernel: time below t_min");
    const Points s = score(lo, tlo);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vec si = s.col(i);
      const double fwd = gaussian_logpdf(xp.col(i), forward_reverse_step(k, x.col(i), si, t[i], tp[i]));
      const double rev = gaussian_logpdf(x.col(i), forward_reverse_step(k, xp.col(i), si, tp[i], t[i]));
      out[i] = fwd - rev;
    }
    if (!out.allFinite()) throw NumericError("forward-reverse log ratio is not finite");
    return out;
  }
  const GaussianStep unit{Vec(), k.sigma_white * k.sigma_white};
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool space_branch = k.kind == KernelKind::kSpaceOnly || k.kind == KernelKind::kWhite ||
                              (k.kind == KernelKind::kMixture && branch[static_cast<std::size_t>(i)] == Branch::kSpaceOnly);
    if (!space_branch) continue;
    GaussianStep fwd{x.col(i), unit.var};
    GaussianStep rev{xp.col(i), unit.var};
    out[i] = gaussian_logpdf(xp.col(i), fwd) - gaussian_logpdf(x.col(i), rev);
  }
  return out;
}

Vec score_to_velocity(const Eigen::Ref<const Vec>& s, const Eigen::Ref<const Vec>& x, double t) {
  if (!(t > 0.0 && t <= 1.0)) throw DomainError("score_to_velocity requires t in (0, 1]");
  return x / t + ((1.0 - t) / t) * s;
}

Vec velocity_to_score(const Eigen::Ref<const Vec>& v, const Eigen::Ref<const Vec>& x, double t) {
  if (!(t > 0.0 && t < 1.0)) throw DomainError("velocity_to_score requires t in (0, 1)");
  return (t * v - x) / (1.0 - t);
}

}  // namespace stnce
