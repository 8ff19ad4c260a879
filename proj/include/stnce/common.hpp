#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace stnce {

/// Points are stored column-wise: a (dim x n) matrix holds n points.
using Points = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)
inline constexpr double kLog2 = std::numbers::ln2;

// Error taxonomy. Configuration errors map to CLI status 2.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Seeded random stream. Every consumer takes one explicitly; independent
/// streams are derived with split().
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal() { return normal_(engine_); }
  std::uint64_t bits() { return engine_(); }

  /// Draws an index from a discrete distribution given by (unnormalized) weights.
  template <class Weights>
  std::size_t categorical(const Weights& w) {
    double total = 0.0;
    for (double v : w) total += v;
    double u = uniform() * total;
    std::size_t k = 0;
    for (double v : w) {
      if (u < v) return k;
      u -= v;
      ++k;
    }
    // Rounding can leave u slightly above the last bin; pick the last nonzero.
    for (std::size_t j = k; j-- > 0;) {
      if (w[j] > 0.0) return j;
    }
    return 0;
  }

  /// A new stream whose seed depends on this stream's seed and `tag` only.
  [[nodiscard]] Rng split(std::uint64_t tag) const { return Rng(mix(seed_ ^ mix(tag + 0x9e3779b97f4a7c15ULL))); }

  std::uint64_t seed() const { return seed_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    // splitmix64 finalizer
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(sum(exp(v))) without overflow. Returns -inf for an empty or all -inf input.
template <class Range>
double log_sum_exp(const Range& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double std_normal_logpdf(const Eigen::Ref<const Vec>& x) {
  return -0.5 * (static_cast<double>(x.size()) * kLog2Pi + x.squaredNorm());
}

}  // namespace stnce
