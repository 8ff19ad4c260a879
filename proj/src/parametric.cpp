#include "stnce/parametric.hpp"

namespace stnce {

namespace {

void check_batch(const Points& x, const Vec& t, int dim) {
  if (x.rows() != dim || t.size() != x.cols()) throw ContractError("model: batch shape mismatch");
}

}  // namespace

GaussianEnergyModel::GaussianEnergyModel(double mean, double log_std) : theta_{mean, log_std} {}

void GaussianEnergyModel::potential(const Points& x, const Vec& t, Vec& out) const {
  check_batch(x, t, 1);
  out.resize(x.cols());
  const double s2 = std::exp(2.0 * theta_[1]);
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const double ti = t[i];
    const double v = ti * ti * s2 + (1.0 - ti) * (1.0 - ti);
    const double d = x(0, i) - ti * theta_[0];
    out[i] = 0.5 * (kLog2Pi + std::log(v) + d * d / v);
  }
}

void GaussianEnergyModel::accumulate_parameter_gradient(const Points& x, const Vec& t, const Vec& w,
                                                        std::span<double> grad) const {
  check_batch(x, t, 1);
  if (w.size() != x.cols() || grad.size() != 2) throw ContractError("model: gradient shape mismatch");
  const double s2 = std::exp(2.0 * theta_[1]);
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const double ti = t[i];
    const double v = ti * ti * s2 + (1.0 - ti) * (1.0 - ti);
    const double d = x(0, i) - ti * theta_[0];
    const double dv = 2.0 * ti * ti * s2;  // dv / d log s
    grad[0] += w[i] * (-ti * d / v);
    grad[1] += w[i] * 0.5 * (dv / v - d * d * dv / (v * v));
  }
}

void GaussianEnergyModel::input_gradient(const Points& x, const Vec& t, Points& dx, Vec& dt) const {
  check_batch(x, t, 1);
  dx.resize(1, x.cols());
  dt.resize(x.cols());
  const double s2 = std::exp(2.0 * theta_[1]);
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const double ti = t[i];
    const double v = ti * ti * s2 + (1.0 - ti) * (1.0 - ti);
    const double d = x(0, i) - ti * theta_[0];
    const double dvdt = 2.0 * ti * s2 - 2.0 * (1.0 - ti);
    dx(0, i) = d / v;
    dt[i] = 0.5 * (dvdt / v - d * d * dvdt / (v * v)) - theta_[0] * d / v;
  }
}

void OracleModel::potential(const Points& x, const Vec& t, Vec& out) const {
  check_batch(x, t, target_->dim());
  out = -marginal_log_density(*target_, x, t);
}

void OracleModel::input_gradient(const Points& x, const Vec& t, Points& dx, Vec& dt) const {
  check_batch(x, t, target_->dim());
  dx = -marginal_space_score(*target_, x, t);
  dt.resize(x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const double ti = t[i];
    dt[i] = (ti > 0.0 && ti < 1.0) ? -InterpolantMarginal(*target_, ti).time_score(Vec(x.col(i)))
                                   : std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace stnce
