#include "stnce/targets.hpp"

#include <algorithm>

namespace stnce {

GmmTarget::GmmTarget(Vec weights, Mat means, Mat stds)
    : weights_(std::move(weights)), means_(std::move(means)), stds_(std::move(stds)) {
  if (weights_.size() == 0 || means_.cols() != weights_.size() || stds_.cols() != weights_.size() ||
      stds_.rows() != means_.rows() || means_.rows() == 0) {
    throw ConfigError("gmm: weights, means and stds disagree in shape");
  }
  if ((weights_.array() < 0.0).any() || std::abs(weights_.sum() - 1.0) > 1e-12) {
    throw ConfigError("gmm: weights must be a probability vector");
  }
  if (!(stds_.array() > 0.0).all() || !stds_.allFinite() || !means_.allFinite()) {
    throw ConfigError("gmm: stds must be positive and means finite");
  }
}

GmmTarget GmmTarget::isotropic(Vec weights, Mat means, double std) {
  Mat stds = Mat::Constant(means.rows(), means.cols(), std);
  return GmmTarget(std::move(weights), std::move(means), std::move(stds));
}

GmmTarget GmmTarget::gaussian(const Vec& mean, double std) {
  return isotropic(Vec::Ones(1), Mat(mean), std);
}

GmmTarget GmmTarget::random(int components, int dim, double comp_std, std::uint64_t seed) {
  if (components <= 0 || dim <= 0) throw ConfigError("random gmm: K and dim must be positive");
  Rng rng(seed);
  Mat means(dim, components);
  for (int k = 0; k < components; ++k)
    for (int j = 0; j < dim; ++j) means(j, k) = rng.normal();
  return isotropic(Vec::Constant(components, 1.0 / components), std::move(means), comp_std);
}

double GmmTarget::data_std() const {
  Vec mean = means_ * weights_;
  Vec second = (means_.array().square() + stds_.array().square()).matrix() * weights_;
  return std::sqrt((second.array() - mean.array().square()).mean());
}

Points sample_target(const GmmTarget& target, int n, Rng& rng) {
  if (n < 1) throw ConfigError("sample_target: n must be >= 1");
  Points out(target.dim(), n);
  for (int i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(rng.categorical(target.weights()));
    for (int j = 0; j < target.dim(); ++j) out(j, i) = target.means()(j, k) + target.stds()(j, k) * rng.normal();
  }
  return out;
}

InterpolantMarginal::InterpolantMarginal(const GmmTarget& target, double t) : target_(&target), t_(t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("interpolant marginal: t must lie in [0, 1]");
  const double r = (1.0 - t) * (1.0 - t);
  var_ = (t * t) * target.stds().array().square() + r;
  centers_ = t * target.means();
  // t = 0 collapses every component onto the reference; the formulas above
  // already give N(0, I) there, and at t = 1 the pure target.
  log_norm_.resize(target.components());
  for (int k = 0; k < target.components(); ++k) {
    const double w = target.weights()[k];
    log_norm_[k] = (w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity()) -
                   0.5 * (target.dim() * kLog2Pi + var_.col(k).array().log().sum());
  }
}

Vec InterpolantMarginal::component_log_terms(const Eigen::Ref<const Vec>& x) const {
  if (x.size() != target_->dim()) throw ContractError("log_density: dimension mismatch");
  Vec out(target_->components());
  for (int k = 0; k < target_->components(); ++k) {
    out[k] = log_norm_[k] - 0.5 * ((x - centers_.col(k)).array().square() / var_.col(k).array()).sum();
  }
  return out;
}

double InterpolantMarginal::log_density(const Eigen::Ref<const Vec>& x) const {
  return log_sum_exp(component_log_terms(x));
}

Vec InterpolantMarginal::log_density_batch(const Points& x) const {
  Vec out(x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) out[i] = log_density(Vec(x.col(i)));
  return out;
}

Vec InterpolantMarginal::space_score(const Eigen::Ref<const Vec>& x) const {
  if (!(t_ > 0.0)) throw DomainError("space_score requires t in (0, 1]");
  Vec terms = component_log_terms(x);
  const double lse = log_sum_exp(terms);
  Vec score = Vec::Zero(x.size());
  for (int k = 0; k < target_->components(); ++k) {
    const double r = std::exp(terms[k] - lse);
    if (r == 0.0) continue;
    score.array() -= r * (x - centers_.col(k)).array() / var_.col(k).array();
  }
  return score;
}

Points InterpolantMarginal::space_score_batch(const Points& x) const {
  Points out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) out.col(i) = space_score(Vec(x.col(i)));
  return out;
}

double InterpolantMarginal::time_score(const Eigen::Ref<const Vec>& x) const {
  if (!(t_ > 0.0 && t_ < 1.0)) throw DomainError("time_score requires t in (0, 1)");
  Vec terms = component_log_terms(x);
  const double lse = log_sum_exp(terms);
  const double t = t_;
  double out = 0.0;
  for (int k = 0; k < target_->components(); ++k) {
    const double r = std::exp(terms[k] - lse);
    if (r == 0.0) continue;
    const auto mu = target_->means().col(k).array();
    const auto s2 = target_->stds().col(k).array().square();
    const auto v = var_.col(k).array();
    const Eigen::ArrayXd dv = 2.0 * t * s2 - 2.0 * (1.0 - t);
    const Eigen::ArrayXd diff = x.array() - t * mu;
    const double d = -0.5 * (dv / v).sum() + (mu * diff / v).sum() + 0.5 * (diff.square() * dv / v.square()).sum();
    out += r * d;
  }
  return out;
}

Points InterpolantMarginal::sample(int n, Rng& rng) const {
  Points x1 = sample_target(*target_, n, rng);
  Points out(x1.rows(), n);
  for (int i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < x1.rows(); ++j) out(j, i) = (1.0 - t_) * rng.normal() + t_ * x1(j, i);
  return out;
}

Vec InterpolantMarginal::mean() const { return centers_ * target_->weights(); }

Vec InterpolantMarginal::variance() const {
  Vec m = mean();
  Vec second = (var_.array() + centers_.array().square()).matrix() * target_->weights();
  return second.array() - m.array().square();
}

Vec marginal_log_density(const GmmTarget& target, const Points& x, const Vec& t) {
  Vec out(x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) out[i] = InterpolantMarginal(target, t[i]).log_density(Vec(x.col(i)));
  return out;
}

Points marginal_space_score(const GmmTarget& target, const Points& x, const Vec& t) {
  Points out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) out.col(i) = InterpolantMarginal(target, t[i]).space_score(Vec(x.col(i)));
  return out;
}

FailureScores failure_scores(double mu1, double mu2, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("failure_scores: sigma must be positive");
  if (mu2 < mu1) throw DomainError("failure_scores: expected mu2 >= mu1");
  FailureScores s;
  s.multimodality = (mu2 - mu1) / (mu2 - mu1 + 2.0 * sigma);
  const double a = std::min(mu1 - sigma, mu2 - sigma);
  const double b = std::max(mu1 + sigma, mu2 + sigma);
  if (b == a) {
    s.mismatch = (a >= -1.0 && a <= 1.0) ? 0.0 : 1.0;
  } else {
    s.mismatch = 1.0 - std::max(0.0, std::min(b, 1.0) - std::max(a, -1.0)) / (b - a);
  }
  return s;
}

const std::vector<FailureGridPoint>& failure_mode_grid() {
  static const std::vector<FailureGridPoint> grid = {
      {-0.90, -0.90}, {0.79, 0.85},   {0.01, 0.21},   {0.01, 0.61},   {-0.91, 0.91},
      {-0.95, -0.95}, {-0.97, -0.90}, {0.80, 1.00},   {-1.10, -0.50}, {-1.07, 1.42},
      {1.00, 1.00},   {-1.03, -0.97}, {-1.10, -0.89}, {-1.30, -0.70}, {-2.29, 1.55},
      {-1.05, -1.05}, {-1.10, -1.03}, {1.00, 1.20},   {-1.50, -0.90}, {-3.00, -0.37},
      {-3.00, -3.00}, {-1.98, -1.92}, {-1.98, -1.78}, {-1.98, -1.38}, {-3.00, -1.07},
  };
  return grid;
}

GmmTarget failure_mode_target(const FailureGridPoint& p, double component_std) {
  Mat means(1, 2);
  means << p.mu1, p.mu2;
  return GmmTarget::isotropic(Vec::Constant(2, 0.5), std::move(means), component_std);
}

}  // namespace stnce
