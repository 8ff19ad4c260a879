#pragma once

#include "stnce/interpolant.hpp"
#include "stnce/model.hpp"
#include "stnce/targets.hpp"

#include <functional>
#include <string>

namespace stnce {

/// Perturbation kernel families. The first three are the degenerate kernels
/// behind the classical special cases; mixture, white and forward_reverse are
/// the spatiotemporal ones.
enum class KernelKind {
  kReferenceSwap,  // t' = 1 - t, x' = x (two-point time prior)
  kTimeOnly,       // x' = x, t' ~ proposal
  kSpaceOnly,      // t' = t, x' ~ N(x, sigma_white^2 I)
  kMixture,        // one of the two above with probability 1/2 each
  kWhite,          // x' ~ N(x, sigma_white^2 I), t' ~ proposal
  kForwardReverse, // noising for t' < t, score-based denoising for t' > t
};

enum class ScoreSource { kOracle, kSelf };
enum class DenoiseVariant { kSeeds1, kRecovery };

KernelKind parse_kernel_kind(const std::string& s);
std::string to_string(KernelKind k);
ScoreSource parse_score_source(const std::string& s);
std::string to_string(ScoreSource s);
DenoiseVariant parse_denoise_variant(const std::string& s);
std::string to_string(DenoiseVariant d);

struct PerturbationKernel {
  KernelKind kind = KernelKind::kWhite;
  double sigma_white = 0.1;
  ScoreSource score_source = ScoreSource::kOracle;
  DenoiseVariant denoise_variant = DenoiseVariant::kSeeds1;
  double t_min = 1e-3;
  TimeProposal proposal;

  void validate() const;
  /// True when the x-factor of the kernel has a Dirac component.
  bool has_space_dirac() const { return kind == KernelKind::kReferenceSwap || kind == KernelKind::kTimeOnly; }
};

/// Space score s(x, t) = grad_x log p_t(x), evaluated column-wise. Results are
/// treated as constants by every loss.
using ScoreFn = std::function<Points(const Points& x, const Vec& t)>;

ScoreFn oracle_score(const GmmTarget& target);
ScoreFn self_score(const EnergyModel& model);

/// Isotropic Gaussian N(mean, var I).
struct GaussianStep {
  Vec mean;
  double var = 0.0;
};

/// Forward transition of the interpolant from t down to t' < t.
GaussianStep noising_step(const Eigen::Ref<const Vec>& x, double t, double t_prime);
/// First-order exponential-integrator denoising step from t up to t' > t.
GaussianStep seeds1_step(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& score, double t,
                         double t_prime);
/// Recovery-likelihood denoising step from t up to t' > t:
/// mean x/a + (b^2/a^2) s, variance b^2/a^2 with a = t/t', b^2 = (1-t)^2 - a^2 (1-t')^2.
GaussianStep recovery_kernel(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& score, double t,
                             double t_prime);

/// Branch of the forward-reverse kernel for (t -> t'). `score` is s(x, t) and
/// is only read when t' > t.
GaussianStep forward_reverse_step(const PerturbationKernel& k, const Eigen::Ref<const Vec>& x,
                                  const Eigen::Ref<const Vec>& score, double t, double t_prime);

double gaussian_logpdf(const Eigen::Ref<const Vec>& y, const GaussianStep& g);

/// Draws t' for a row starting at t (mixture kernels draw their branch first
/// and pass it in).
double kernel_time(const PerturbationKernel& k, double t, Branch branch, Rng& rng);

/// Draws x' ~ p_n(.|x, t, t'). For the mixture kind the branch is implied by
/// t' == t (space branch) versus t' != t (time branch).
Vec kernel_sample(const PerturbationKernel& k, const Eigen::Ref<const Vec>& x, double t, double t_prime,
                  const ScoreFn& score, Rng& rng);

/// log p_n(x'|x, t, t') for the x-factor. Dirac factors return +inf when
/// x' = x and -inf otherwise; mixtures are not evaluated numerically.
double kernel_logpdf(const PerturbationKernel& k, const Eigen::Ref<const Vec>& x, double t,
                     const Eigen::Ref<const Vec>& x_prime, double t_prime, const ScoreFn& score);

/// log p_n(x'|x,t,t') - log p_n(x|x',t',t) for every row, with Dirac factors
/// cancelled symbolically according to each row's branch. Scores are
/// requested in one batch at the smaller time of each row.
Vec kernel_log_ratio(const PerturbationKernel& k, const Points& x, const Vec& t, const Points& xp, const Vec& tp,
                     const std::vector<Branch>& branch, const ScoreFn& score);

/// Velocity v = x/t + ((1-t)/t) s of the interpolant with alpha = t, beta = 1 - t.
Vec score_to_velocity(const Eigen::Ref<const Vec>& s, const Eigen::Ref<const Vec>& x, double t);
Vec velocity_to_score(const Eigen::Ref<const Vec>& v, const Eigen::Ref<const Vec>& x, double t);

}  // namespace stnce
