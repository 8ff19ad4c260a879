#include "stnce/interpolant.hpp"

namespace stnce {

double fold(double u) {
  if (!std::isfinite(u)) throw DomainError("fold: non-finite input");
  double r = std::fmod(u, 2.0);
  if (r < 0.0) r += 2.0;
  return 1.0 - std::abs(r - 1.0);
}

Points interpolate(const Points& x0, const Points& x1, double t) {
  if (x0.rows() != x1.rows() || x0.cols() != x1.cols()) throw ContractError("interpolate: shape mismatch");
  return (1.0 - t) * x0 + t * x1;
}

void TimeProposal::validate() const {
  if (!(sigma_time == -1.0 || sigma_time > 0.0)) throw ConfigError("sigma_time must be -1 or positive");
  if (!(t_min_gap >= 0.0 && t_min_gap < 0.5)) throw ConfigError("t_min_gap must lie in [0, 0.5)");
}

double TimeProposal::sample(double t, Rng& rng) const {
  if (uniform()) return rng.uniform();
  return fold(t + sigma_time * rng.normal());
}

double TimeProposal::density(double t, double t_prime) const {
  if (t_prime < 0.0 || t_prime > 1.0) return 0.0;
  if (uniform()) return 1.0;
  const double s = sigma_time;
  const double norm = 1.0 / (s * std::sqrt(2.0 * std::numbers::pi));
  double p = 0.0;
  for (int k = -6; k <= 6; ++k) {
    const double a = (t_prime - t + 2.0 * k) / s;
    const double b = (-t_prime - t + 2.0 * k) / s;
    p += std::exp(-0.5 * a * a) + std::exp(-0.5 * b * b);
  }
  return norm * p;
}

Scheme parse_scheme(const std::string& s) {
  if (s == "default") return Scheme::kDefault;
  if (s == "reuse") return Scheme::kReuse;
  throw ConfigError("unknown scheme: " + s);
}

std::string to_string(Scheme s) { return s == Scheme::kDefault ? "default" : "reuse"; }

PairBatch PairBatch::select(Branch b) const {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < size(); ++i)
    if (branch[static_cast<std::size_t>(i)] == b) rows.push_back(i);
  PairBatch out;
  out.scheme = scheme;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.x.resize(x.rows(), n);
  out.xp.resize(x.rows(), n);
  out.t.resize(n);
  out.tp.resize(n);
  out.correction.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto i = rows[static_cast<std::size_t>(j)];
    out.x.col(j) = x.col(i);
    out.xp.col(j) = xp.col(i);
    out.t[j] = t[i];
    out.tp[j] = tp[i];
    out.correction[j] = correction[i];
    out.branch.push_back(b);
  }
  return out;
}

PairBatch PairBatch::slice(Eigen::Index begin, Eigen::Index count) const {
  if (begin < 0 || count < 0 || begin + count > size()) throw ContractError("PairBatch::slice out of range");
  PairBatch out;
  out.scheme = scheme;
  out.x = x.middleCols(begin, count);
  out.xp = xp.middleCols(begin, count);
  out.t = t.segment(begin, count);
  out.tp = tp.segment(begin, count);
  out.correction = correction.segment(begin, count);
  out.branch.assign(branch.begin() + begin, branch.begin() + begin + count);
  return out;
}

void PairBatch::check() const {
  const auto n = size();
  if (x.cols() != n || xp.cols() != n || tp.size() != n || correction.size() != n ||
      static_cast<Eigen::Index>(branch.size()) != n || x.rows() != xp.rows()) {
    throw ContractError("PairBatch: inconsistent shapes");
  }
  if ((t.array() < 0.0).any() || (t.array() > 1.0).any() || (tp.array() < 0.0).any() || (tp.array() > 1.0).any()) {
    throw ContractError("PairBatch: times outside [0, 1]");
  }
}

}  // namespace stnce
