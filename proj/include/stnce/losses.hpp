#pragma once

#include "stnce/kernels.hpp"
#include "stnce/model.hpp"

#include <span>
#include <string>
#include <vector>

namespace stnce {

/// Loss value when every logit vanishes (sum over the two classes of per-class means).
inline constexpr double kTwoLog2 = 2.0 * std::numbers::ln2;

enum class Method { kNce, kTnce, kTcnce, kStnceM, kStnceW, kStnceS, kStnceO, kRneS, kRneO };

Method parse_method(const std::string& s);
std::string to_string(Method m);
const std::vector<Method>& all_methods();

struct LossSpec {
  Method method = Method::kStnceW;
  PerturbationKernel kernel;

  /// Kernel kind and score source implied by the method, other kernel fields kept.
  static LossSpec for_method(Method m, PerturbationKernel base = {});
  /// Throws ConfigError when the kernel does not match the method.
  void validate() const;
  bool is_rne() const { return method == Method::kRneS || method == Method::kRneO; }
  /// The model at t = 0 is replaced by the analytic reference log density.
  bool pins_reference() const { return method == Method::kNce; }
  bool needs_self_score() const {
    return kernel.kind == KernelKind::kForwardReverse && kernel.score_source == ScoreSource::kSelf;
  }
};

/// -mean_A log sigma(F) - mean_B log(1 - sigma(F)) through softplus.
double logistic_loss(const Vec& logits_a, const Vec& logits_b);

/// U(x_i, t_i), with U(x, 0) = -log N(x; 0, I) when `pin_reference` is set.
Vec batch_potential(const EnergyModel& model, const Points& x, const Vec& t, bool pin_reference);

/// F = -U(x,t) + U(x',t') + correction for every row of the batch.
Vec stnce_logits(const EnergyModel& model, const PairBatch& batch, bool pin_reference = false);

/// Logit of a single tuple; the kernel log-ratio is evaluated on the spot
/// (mixture rows are classified by t' == t).
double stnce_logit(const EnergyModel& model, const Eigen::Ref<const Vec>& x, double t,
                   const Eigen::Ref<const Vec>& xp, double tp, const PerturbationKernel& kernel,
                   const ScoreFn& score, bool pin_reference = false);

/// Logistic loss with the sampled tuples as class A and their swaps as class
/// B (whose logits are -F), or the RNE mean squared residual.
double loss_value(const LossSpec& spec, const EnergyModel& model, const PairBatch& batch);

/// Same value as loss_value; writes d loss / d theta into `grad` (overwritten).
/// Kernel terms are batch constants, so no gradient flows through scores.
double loss_and_gradient(const LossSpec& spec, const EnergyModel& model, const PairBatch& batch,
                         std::span<double> grad);

struct SpecialCaseLogits {
  double generic = 0.0;
  double specific = 0.0;
};

/// Generic logit of row `i` next to the method's closed form. Only nce, tnce
/// and tcnce have a separate closed form.
SpecialCaseLogits reduce_to_special_case(Method method, const EnergyModel& model, const PairBatch& batch,
                                         Eigen::Index i, const PerturbationKernel& kernel);

// --- small-step limit ---------------------------------------------------------

/// Exact-transition diagnostic on a 1-D Gaussian target with the model equal to
/// the truth plus delta(x) = amplitude * sin(omega * x).
struct LimitConfig {
  double target_mean = 0.5;
  double target_std = 0.8;
  double amplitude = 0.5;
  double omega = 1.0;
  double t_lo = 0.2;
  double t_hi = 0.8;
  long samples = 1000000;
};

struct LimitRow {
  double dt = 0.0;
  double excess = 0.0;
  double excess_se = 0.0;
  double predicted = 0.0;
  double ratio() const { return excess / predicted; }
};

std::vector<LimitRow> limit_diagnostic_sde(const LimitConfig& cfg, const std::vector<double>& dt_grid, Rng& rng);

}  // namespace stnce
