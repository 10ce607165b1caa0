#ifndef BDSDE_STATS_HPP
#define BDSDE_STATS_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

namespace bdsde {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double mid() const noexcept { return 0.5 * (lo + hi); }
  double half_width() const noexcept { return 0.5 * (hi - lo); }
};

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Sample standard error of the mean, sd (n-1 normalization) over sqrt(n).
inline double standard_error(std::span<const double> v) {
  if (v.size() < 2) throw std::invalid_argument("standard_error: need at least 2 values");
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double n = static_cast<double>(v.size());
  return std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

/// Normal-approximation interval mean +- z_{(1+level)/2} * s / sqrt(n), with
/// s the 1/n (population) standard deviation of the values.
inline Interval mean_ci(std::span<const double> v, double level) {
  if (v.size() < 2) throw std::invalid_argument("mean_ci: need at least 2 values");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("mean_ci: level must lie in (0, 1)");
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double n = static_cast<double>(v.size());
  const double s = std::sqrt(ss / n);
  const double z = boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 * (1.0 + level));
  const double hw = z * s / std::sqrt(n);
  return {m - hw, m + hw};
}

} // namespace bdsde

#endif // BDSDE_STATS_HPP
