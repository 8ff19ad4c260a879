#pragma once

#include "stnce/common.hpp"

#include <functional>
#include <span>
#include <vector>

namespace stnce {

/// A time-dependent unnormalized density model p(x|t) ∝ exp(-U(x,t)).
///
/// U is the "potential": the energy E(x,t) plus, for models that track it,
/// a learned log-normalizer log Z(t). Losses only ever see U, so energy
/// differences and log-normalizer differences enter logits together.
///
/// Evaluation is const and safe for concurrent readers. Parameters live in a
/// single flat buffer so optimizers and EMA can treat them uniformly.
class EnergyModel {
 public:
  virtual ~EnergyModel() = default;

  virtual int input_dim() const = 0;
  virtual std::span<double> parameters() = 0;
  virtual std::span<const double> parameters() const = 0;
  std::size_t num_parameters() const { return parameters().size(); }

  /// out[i] = U(x_i, t_i) for the columns of `x`.
  virtual void potential(const Points& x, const Vec& t, Vec& out) const = 0;

  /// grad += sum_i w_i * dU(x_i,t_i)/dtheta.
  virtual void accumulate_parameter_gradient(const Points& x, const Vec& t, const Vec& w,
                                             std::span<double> grad) const = 0;

  /// Evaluates u = U(x, t), then adds sum_i w_i dU_i/dtheta to `grad` with
  /// w = upstream(u). Lets models share one forward pass between the two.
  virtual void potential_and_gradient(const Points& x, const Vec& t, Vec& u,
                                      const std::function<Vec(const Vec&)>& upstream,
                                      std::span<double> grad) const {
    potential(x, t, u);
    accumulate_parameter_gradient(x, t, upstream(u), grad);
  }

  /// Gradients of the energy w.r.t. the inputs: dx (dim x n) and dt (n).
  /// Log-normalizer heads do not depend on x, so dx is also dU/dx.
  virtual void input_gradient(const Points& x, const Vec& t, Points& dx, Vec& dt) const = 0;

  // Convenience wrappers.
  Vec potential(const Points& x, const Vec& t) const {
    Vec out(x.cols());
    potential(x, t, out);
    return out;
  }
  double potential_at(const Eigen::Ref<const Vec>& x, double t) const {
    Points p = x;
    Vec tt = Vec::Constant(1, t);
    Vec out(1);
    potential(p, tt, out);
    return out[0];
  }
  /// Model space score -dU/dx, used as the "self" score source.
  Points space_score(const Points& x, const Vec& t) const {
    Points dx;
    Vec dt;
    input_gradient(x, t, dx, dt);
    return -dx;
  }
};

}  // namespace stnce
