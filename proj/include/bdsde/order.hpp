#ifndef BDSDE_ORDER_HPP
#define BDSDE_ORDER_HPP

#include <algorithm>
#include <cstddef>
#include <stdexcept>

#include "bdsde/solver.hpp"

namespace bdsde {

inline constexpr double kDefaultOrderEpsilon = 0.02;
inline constexpr double kDefaultOrderFraction = 0.01;

/// Statistical version of "a <= b a.s." over every (outer, inner, node) point.
struct OrderReport {
  double violation_fraction = 0.0; // share of points with a - b > epsilon
  double max_violation = 0.0;      // max of (a - b)^+
  double mean_gap = 0.0;           // mean of b - a
  double epsilon = kDefaultOrderEpsilon;
  double threshold = kDefaultOrderFraction;
  bool pass = true;                // violation_fraction < threshold
};

inline OrderReport check_order(const DiscreteSolution& a, const DiscreteSolution& b,
                               double epsilon = kDefaultOrderEpsilon, double p = kDefaultOrderFraction) {
  if (!a.same_shape(b)) throw std::invalid_argument("check_order: solutions have different grid or cloud shape");
  if (!(epsilon > 0.0)) throw std::invalid_argument("check_order: epsilon must be positive");
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("check_order: p must lie in (0, 1)");
  const auto ya = a.y_values();
  const auto yb = b.y_values();
  std::size_t violations = 0;
  double max_violation = 0.0;
  double gap = 0.0;
  for (std::size_t q = 0; q < ya.size(); ++q) {
    const double diff = ya[q] - yb[q];
    if (diff > epsilon) ++violations;
    max_violation = std::max(max_violation, diff);
    gap += -diff;
  }
  OrderReport r;
  const double n = static_cast<double>(ya.size());
  r.violation_fraction = static_cast<double>(violations) / n;
  r.max_violation = max_violation;
  r.mean_gap = gap / n;
  r.epsilon = epsilon;
  r.threshold = p;
  r.pass = r.violation_fraction < p;
  return r;
}

/// check_order(0, sol): is the solution nonnegative up to epsilon?
inline OrderReport check_nonnegativity(const DiscreteSolution& sol, double epsilon = kDefaultOrderEpsilon,
                                       double p = kDefaultOrderFraction) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("check_nonnegativity: epsilon must be positive");
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("check_nonnegativity: p must lie in (0, 1)");
  std::size_t violations = 0;
  double max_violation = 0.0;
  double gap = 0.0;
  for (double y : sol.y_values()) {
    if (-y > epsilon) ++violations;
    max_violation = std::max(max_violation, -y);
    gap += y;
  }
  OrderReport r;
  const double n = static_cast<double>(sol.n_points());
  r.violation_fraction = static_cast<double>(violations) / n;
  r.max_violation = max_violation;
  r.mean_gap = gap / n;
  r.epsilon = epsilon;
  r.threshold = p;
  r.pass = r.violation_fraction < p;
  return r;
}

} // namespace bdsde

#endif // BDSDE_ORDER_HPP
