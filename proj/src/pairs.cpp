#include "stnce/pairs.hpp"

namespace stnce {

namespace {

Branch draw_branch(const PerturbationKernel& k, Rng& rng) {
  switch (k.kind) {
    case KernelKind::kReferenceSwap:
    case KernelKind::kTimeOnly: return Branch::kTimeOnly;
    case KernelKind::kSpaceOnly: return Branch::kSpaceOnly;
    case KernelKind::kMixture: return rng.uniform() < 0.5 ? Branch::kTimeOnly : Branch::kSpaceOnly;
    default: return Branch::kBoth;
  }
}

bool forward_reverse_ok(const PerturbationKernel& k, double t, double tp) {
  return std::min(t, tp) >= k.t_min && std::abs(t - tp) >= k.proposal.t_min_gap && t != tp;
}

Vec gaussian_draw(const GaussianStep& g, Rng& rng) {
  Vec out = g.mean;
  const double sd = std::sqrt(g.var);
  for (Eigen::Index j = 0; j < out.size(); ++j) out[j] += sd * rng.normal();
  return out;
}

/// Fills xp for rows whose x, t, tp and branch are set.
void perturb_rows(const PerturbationKernel& k, PairBatch& b, const ScoreFn& score, Rng& rng) {
  const Eigen::Index n = b.size();
  b.xp.resize(b.x.rows(), n);
  if (k.kind == KernelKind::kForwardReverse) {
    if (!score) throw ContractError("forward-reverse sampling needs a score function");
    const Points s = score(b.x, b.t);
    for (Eigen::Index i = 0; i < n; ++i)
      b.xp.col(i) = gaussian_draw(forward_reverse_step(k, b.x.col(i), s.col(i), b.t[i], b.tp[i]), rng);
    return;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool space = b.branch[static_cast<std::size_t>(i)] != Branch::kTimeOnly;
    b.xp.col(i) = b.x.col(i);
    if (space)
      for (Eigen::Index j = 0; j < b.x.rows(); ++j) b.xp(j, i) += k.sigma_white * rng.normal();
  }
}

}  // namespace

PairBatch sample_pairs_default(const GmmTarget& target, const PerturbationKernel& kernel, int n, Rng& rng,
                               const ScoreFn& score) {
  if (n < 1) throw ConfigError("sample_pairs: n must be >= 1");
  const Points z = sample_target(target, n, rng);
  PairBatch b;
  b.scheme = Scheme::kDefault;
  b.x.resize(target.dim(), n);
  b.t.resize(n);
  b.tp.resize(n);
  b.branch.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double t = 0.0;
    double tp = 0.0;
    Branch br = Branch::kBoth;
    int tries = 0;
    for (;; ++tries) {
      if (tries >= kMaxTimeRetries) throw DomainError("sample_pairs_default: no valid time pair after retries");
      t = kernel.kind == KernelKind::kReferenceSwap ? (rng.uniform() < 0.5 ? 0.0 : 1.0) : rng.uniform();
      br = draw_branch(kernel, rng);
      tp = kernel_time(kernel, t, br, rng);
      if (kernel.kind != KernelKind::kForwardReverse || forward_reverse_ok(kernel, t, tp)) break;
    }
    b.t[i] = t;
    b.tp[i] = tp;
    b.branch[static_cast<std::size_t>(i)] = br;
    for (int j = 0; j < target.dim(); ++j) b.x(j, i) = (1.0 - t) * rng.normal() + t * z(j, i);
  }
  perturb_rows(kernel, b, score, rng);
  b.correction = kernel_log_ratio(kernel, b.x, b.t, b.xp, b.tp, b.branch, score);
  return b;
}

PairBatch sample_pairs_reuse(const GmmTarget& target, const PerturbationKernel& kernel, int n, Rng& rng,
                             const ScoreFn& score) {
  if (n < 1) throw ConfigError("sample_pairs: n must be >= 1");
  const int d = target.dim();
  const Points z = sample_target(target, n, rng);
  PairBatch b;
  b.scheme = Scheme::kReuse;
  b.x.resize(d, 2 * n);
  b.xp.resize(d, 2 * n);
  b.t.resize(2 * n);
  b.tp.resize(2 * n);
  b.branch.resize(static_cast<std::size_t>(2 * n));
  const bool fr = kernel.kind == KernelKind::kForwardReverse;

  std::vector<Eigen::Index> denoise_rows;
  for (int i = 0; i < n; ++i) {
    double t0 = 0.0;
    double t1 = 0.0;
    for (int tries = 0;; ++tries) {
      if (tries >= kMaxTimeRetries) throw DomainError("sample_pairs_reuse: no valid time pair after retries");
      if (kernel.kind == KernelKind::kReferenceSwap) {
        t0 = 0.0;
        t1 = 1.0;
        break;
      }
      t0 = rng.uniform();
      t1 = kernel.proposal.sample(t0, rng);
      if (!fr) break;
      if (t1 < t0) std::swap(t0, t1);
      if (forward_reverse_ok(kernel, t0, t1)) break;
    }
    Vec eps(d);
    for (int j = 0; j < d; ++j) eps[j] = rng.normal();
    const Eigen::Index ra = 2 * i;
    const Eigen::Index rb = 2 * i + 1;
    const Vec x1 = (1.0 - t1) * eps + t1 * z.col(i);
    if (fr) {
      const Vec x0 = gaussian_draw(noising_step(x1, t1, t0), rng);
      b.x.col(ra) = x1;
      b.t[ra] = t1;
      b.xp.col(ra) = x0;
      b.tp[ra] = t0;
      b.x.col(rb) = x0;
      b.t[rb] = t0;
      b.tp[rb] = t1;
      b.branch[static_cast<std::size_t>(ra)] = Branch::kBoth;
      b.branch[static_cast<std::size_t>(rb)] = Branch::kBoth;
      denoise_rows.push_back(rb);
      continue;
    }
    const Vec x0 = (1.0 - t0) * eps + t0 * z.col(i);
    const double times[2] = {t0, t1};
    const Vec* starts[2] = {&x0, &x1};
    for (int r = 0; r < 2; ++r) {
      const Eigen::Index row = 2 * i + r;
      const Branch br = draw_branch(kernel, rng);
      b.branch[static_cast<std::size_t>(row)] = br;
      b.x.col(row) = *starts[r];
      b.t[row] = times[r];
      b.tp[row] = (kernel.kind == KernelKind::kSpaceOnly || br == Branch::kSpaceOnly) ? times[r] : times[1 - r];
      b.xp.col(row) = *starts[r];
      if (br != Branch::kTimeOnly)
        for (int j = 0; j < d; ++j) b.xp(j, row) += kernel.sigma_white * rng.normal();
    }
  }
  if (fr && !denoise_rows.empty()) {
    if (!score) throw ContractError("forward-reverse sampling needs a score function");
    const auto m = static_cast<Eigen::Index>(denoise_rows.size());
    Points xs(d, m);
    Vec ts(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      xs.col(j) = b.x.col(denoise_rows[static_cast<std::size_t>(j)]);
      ts[j] = b.t[denoise_rows[static_cast<std::size_t>(j)]];
    }
    const Points s = score(xs, ts);
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto row = denoise_rows[static_cast<std::size_t>(j)];
      b.xp.col(row) = gaussian_draw(forward_reverse_step(kernel, b.x.col(row), s.col(j), b.t[row], b.tp[row]), rng);
    }
  }
  b.correction = kernel_log_ratio(kernel, b.x, b.t, b.xp, b.tp, b.branch, score);
  return b;
}

PairBatch sample_pairs(Scheme scheme, const GmmTarget& target, const PerturbationKernel& kernel, int n, Rng& rng,
                       const ScoreFn& score) {
  return scheme == Scheme::kDefault ? sample_pairs_default(target, kernel, n, rng, score)
                                    : sample_pairs_reuse(target, kernel, n, rng, score);
}

}  // namespace stnce
