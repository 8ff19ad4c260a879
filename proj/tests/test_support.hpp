#pragma once

#include "stnce/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace stnce::testing {

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

/// Worst relative error of `analytic` against central differences of f over params.
inline double fd_check(std::span<double> params, const std::function<double()>& f, const std::vector<double>& analytic,
                       double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double fp = f();
    params[i] = keep - h;
    const double fm = f();
    params[i] = keep;
    const double fd = (fp - fm) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(analytic[i]), 1e-3});
    worst = std::max(worst, std::abs(fd - analytic[i]) / scale);
  }
  return worst;
}

inline Points random_points(int dim, int n, Rng& rng, double scale = 1.0) {
  Points p(dim, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < dim; ++i) p(i, j) = scale * rng.normal();
  return p;
}

inline Vec random_times(int n, Rng& rng, double lo = 0.05, double hi = 0.95) {
  Vec t(n);
  for (int j = 0; j < n; ++j) t[j] = lo + (hi - lo) * rng.uniform();
  return t;
}

/// Kolmogorov-Smirnov statistic against U[0, 1].
inline double ks_uniform(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    d = std::max(d, std::abs((i + 1) / n - v[i]));
    d = std::max(d, std::abs(v[i] - i / n));
  }
  return d;
}

}  // namespace stnce::testing
