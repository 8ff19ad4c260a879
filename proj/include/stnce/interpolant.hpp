#pragma once

#include "stnce/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace stnce {

/// 1 - |(u mod 2) - 1| with a nonnegative remainder; maps R onto [0, 1].
double fold(double u);

/// (1 - t) x0 + t x1.
Points interpolate(const Points& x0, const Points& x1, double t);

/// p(t'|t): uniform resampling when sigma_time < 0, otherwise t' = fold(t + sigma_time * xi).
struct TimeProposal {
  double sigma_time = -1.0;
  /// Minimum |t - t'| enforced for forward-reverse tuples.
  double t_min_gap = 1e-3;

  bool uniform() const { return sigma_time < 0.0; }
  void validate() const;
  double sample(double t, Rng& rng) const;
  /// Density of t' given t on [0, 1]. The folded Gaussian is evaluated as a
  /// wrapped series truncated at |k| <= 6.
  double density(double t, double t_prime) const;
};

enum class Scheme { kDefault, kReuse };
Scheme parse_scheme(const std::string& s);
std::string to_string(Scheme s);

/// Which coordinates of (x, t) a row perturbed. Mixture kernels tag each row
/// with the branch they drew; the Dirac factor of the other coordinate is
/// handled symbolically by the losses.
enum class Branch : std::uint8_t { kBoth, kTimeOnly, kSpaceOnly };

/// Classification tuples (x, t, x', t') stored column-wise, plus the known
/// kernel log-ratio log p_n(x'|x) - log p_n(x|x') of each row.
struct PairBatch {
  Points x;
  Vec t;
  Points xp;
  Vec tp;
  Vec correction;
  std::vector<Branch> branch;
  Scheme scheme = Scheme::kDefault;

  Eigen::Index size() const { return t.size(); }
  /// Rows whose branch equals `b`, in order.
  PairBatch select(Branch b) const;
  /// Rows [begin, begin + count).
  PairBatch slice(Eigen::Index begin, Eigen::Index count) const;
  void check() const;
};

}  // namespace stnce
