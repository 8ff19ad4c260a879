#pragma once

#include "stnce/model.hpp"
#include "stnce/targets.hpp"

#include <array>

namespace stnce {

/// One-dimensional normalized Gaussian family matching the interpolant of a
/// Gaussian target N(m, s^2):
///
///   U(x,t) = -log N(x; t m, t^2 s^2 + (1-t)^2),   theta = (m, log s).
class GaussianEnergyModel final : public EnergyModel {
 public:
  GaussianEnergyModel(double mean, double log_std);

  double mean() const { return theta_[0]; }
  double log_std() const { return theta_[1]; }

  int input_dim() const override { return 1; }
  std::span<double> parameters() override { return theta_; }
  std::span<const double> parameters() const override { return theta_; }

  using EnergyModel::potential;
  void potential(const Points& x, const Vec& t, Vec& out) const override;
  void accumulate_parameter_gradient(const Points& x, const Vec& t, const Vec& w,
                                     std::span<double> grad) const override;
  void input_gradient(const Points& x, const Vec& t, Points& dx, Vec& dt) const override;

 private:
  std::array<double, 2> theta_;
};

/// Parameter-free model whose potential is the exact -log p_t of a target.
class OracleModel final : public EnergyModel {
 public:
  explicit OracleModel(const GmmTarget& target) : target_(&target) {}
  explicit OracleModel(GmmTarget&&) = delete;

  int input_dim() const override { return target_->dim(); }
  std::span<double> parameters() override { return {}; }
  std::span<const double> parameters() const override { return {}; }

  using EnergyModel::potential;
  void potential(const Points& x, const Vec& t, Vec& out) const override;
  void accumulate_parameter_gradient(const Points&, const Vec&, const Vec&, std::span<double>) const override {}
  void input_gradient(const Points& x, const Vec& t, Points& dx, Vec& dt) const override;

 private:
  const GmmTarget* target_;
};

}  // namespace stnce
