#pragma once

#include "stnce/common.hpp"

#include <utility>
#include <vector>

namespace stnce {

/// Weighted Gaussian mixture with diagonal covariances.
class GmmTarget {
 public:
  /// `stds` holds per-component standard deviations (dim x K). Throws
  /// ConfigError on invalid weights or non-positive stds.
  GmmTarget(Vec weights, Mat means, Mat stds);

  /// K components in `dim` dimensions with a shared isotropic std.
  static GmmTarget isotropic(Vec weights, Mat means, double std);
  /// Single Gaussian N(mean, std^2 I).
  static GmmTarget gaussian(const Vec& mean, double std);
  /// K means i.i.d. standard normal, isotropic component std, uniform weights.
  static GmmTarget random(int components, int dim, double comp_std, std::uint64_t seed);

  int dim() const { return static_cast<int>(means_.rows()); }
  int components() const { return static_cast<int>(means_.cols()); }
  const Vec& weights() const { return weights_; }
  const Mat& means() const { return means_; }
  const Mat& stds() const { return stds_; }

  /// Overall per-coordinate standard deviation of the mixture, averaged over coordinates.
  double data_std() const;

 private:
  Vec weights_;
  Mat means_;
  Mat stds_;
};

/// Clean samples x1 ~ p1 (columns).
Points sample_target(const GmmTarget& target, int n, Rng& rng);

/// Law of x_t = (1 - t) x0 + t x1 with x0 ~ N(0, I) independent of x1 ~ target:
/// sum_k w_k N(t mu_k, t^2 Sigma_k + (1 - t)^2 I).
class InterpolantMarginal {
 public:
  InterpolantMarginal(const GmmTarget& target, double t);
  InterpolantMarginal(GmmTarget&&, double) = delete;

  double t() const { return t_; }
  const GmmTarget& target() const { return *target_; }

  double log_density(const Eigen::Ref<const Vec>& x) const;
  Vec log_density_batch(const Points& x) const;

  /// grad_x log p_t(x). Requires t in (0, 1].
  Vec space_score(const Eigen::Ref<const Vec>& x) const;
  Points space_score_batch(const Points& x) const;

  /// d/dt log p_t(x). Requires t in (0, 1).
  double time_score(const Eigen::Ref<const Vec>& x) const;

  /// Exact sample of x_t.
  Points sample(int n, Rng& rng) const;

  /// Mixture mean and per-coordinate variance of x_t.
  Vec mean() const;
  Vec variance() const;

 private:
  /// log w_k + log N_k(x) for every component.
  Vec component_log_terms(const Eigen::Ref<const Vec>& x) const;

  const GmmTarget* target_;
  double t_;
  Mat var_;       // dim x K component variances at time t
  Mat centers_;   // dim x K
  Vec log_norm_;  // per-component log normalizing terms incl. log weight
};

// Convenience wrappers matching the operation names used elsewhere.
inline double log_density(const InterpolantMarginal& m, const Eigen::Ref<const Vec>& x) { return m.log_density(x); }
inline Vec space_score(const InterpolantMarginal& m, const Eigen::Ref<const Vec>& x) { return m.space_score(x); }
inline double time_score(const InterpolantMarginal& m, const Eigen::Ref<const Vec>& x) { return m.time_score(x); }

/// log p_t(x_i) for varying times t_i, one column per point.
Vec marginal_log_density(const GmmTarget& target, const Points& x, const Vec& t);
/// Space score at varying times (oracle score source).
Points marginal_space_score(const GmmTarget& target, const Points& x, const Vec& t);

// --- failure-mode heuristics -------------------------------------------------

struct FailureScores {
  double multimodality = 0.0;
  double mismatch = 0.0;
};

/// Multimodality (mu2-mu1)/(mu2-mu1+2 sigma) and mismatch against the
/// [-1, 1] high-density region of the reference.
FailureScores failure_scores(double mu1, double mu2, double sigma);

struct FailureGridPoint {
  double mu1 = 0.0;
  double mu2 = 0.0;
};

/// The 25 (mu1, mu2) pairs of the failure-mode experiment, in table order.
const std::vector<FailureGridPoint>& failure_mode_grid();
/// sigma used by the multimodality/mismatch heuristics for that grid.
inline constexpr double kFailureScoreSigma = 0.01;
/// Component std of the failure-mode data distribution.
inline constexpr double kFailureComponentStd = 0.1;

/// 0.5 N(mu1, std^2) + 0.5 N(mu2, std^2) in one dimension.
GmmTarget failure_mode_target(const FailureGridPoint& p, double component_std = kFailureComponentStd);

}  // namespace stnce
