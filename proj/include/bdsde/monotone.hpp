#ifndef BDSDE_MONOTONE_HPP
#define BDSDE_MONOTONE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bdsde/order.hpp"
#include "bdsde/problem.hpp"
#include "bdsde/solver.hpp"
#include "bdsde/stats.hpp"

namespace bdsde {

enum class Direction { minimal, upper_bound, sandwich, maximal_h6 };

inline const char* to_string(Direction d) {
  switch (d) {
  case Direction::minimal: return "MINIMAL";
  case Direction::upper_bound: return "UPPER_BOUND";
  case Direction::sandwich: return "SANDWICH";
  case Direction::maximal_h6: return "MAXIMAL_H6";
  }
  return "?";
}

struct IterationConfig {
  std::optional<double> K{}; // penalty constant; defaults to the generator's K
  double tol_iter = 1e-3;
  int i_max = 25;
  Direction direction = Direction::minimal;
  SolverConfig solver{};
  double order_epsilon = 0.01; // consecutive-iterate and envelope checks
  double order_p = 0.01;
  bool keep_iterates = false;  // full solutions are large; summaries are always kept
};

inline void check(const IterationConfig& c) {
  if (!(c.tol_iter > 0.0)) throw std::invalid_argument("IterationConfig: tol_iter must be positive");
  if (c.i_max < 1) throw std::invalid_argument("IterationConfig: I_max must be >= 1");
  if (c.K && !(*c.K >= 0.0)) throw std::invalid_argument("IterationConfig: K must be nonnegative");
  check(c.solver);
}

struct NodeStat {
  double t = 0.0;
  double mean = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

/// Node-wise mean of Y with a 95% interval taken over per-outer means (the
/// outer samples are the independent units).
inline std::vector<NodeStat> node_profile(const DiscreteSolution& sol, double level = 0.95) {
  std::vector<NodeStat> out(sol.n_nodes());
  std::vector<double> outer_means(sol.m_outer());
  std::vector<double> all;
  for (std::size_t k = 0; k < sol.n_nodes(); ++k) {
    for (std::size_t o = 0; o < sol.m_outer(); ++o) outer_means[o] = mean(sol.y_cloud(o, k));
    NodeStat s{sol.grid()[k], mean(outer_means), 0.0, 0.0};
    Interval ci{};
    if (sol.m_outer() >= 2) {
      ci = mean_ci(outer_means, level);
    } else {
      all.assign(sol.y_cloud(0, k).begin(), sol.y_cloud(0, k).end());
      ci = mean_ci(all, level);
    }
    s.ci_lo = std::min(ci.lo, s.mean);
    s.ci_hi = std::max(ci.hi, s.mean);
    out[k] = s;
  }
  return out;
}

struct IterateSummary {
  std::size_t index = 0;
  std::vector<NodeStat> profile;
  double norm_sup_y2 = 0.0;
  double norm_int_z2 = 0.0;
  double y0_mean = 0.0;
};

inline IterateSummary summarize(const DiscreteSolution& sol, std::size_t index) {
  IterateSummary s;
  s.index = index;
  s.profile = node_profile(sol);
  s.norm_sup_y2 = sol.norm_sup_y2;
  s.norm_int_z2 = sol.norm_int_z2;
  s.y0_mean = s.profile.front().mean;
  return s;
}

struct IterationReport {
  Direction direction = Direction::minimal;
  std::string label; // what `final` is claimed to be
  std::vector<IterateSummary> summaries;   // iterate 0, 1, ...
  std::vector<DiscreteSolution> iterates;  // only with keep_iterates
  std::vector<double> deltas;              // deltas[i]: iterate i -> i+1
  std::vector<OrderReport> monotonicity;   // iterate i vs i+1 in the scheme's direction
  std::vector<OrderReport> floor_checks;   // floor <= iterate i+1
  std::vector<OrderReport> ceiling_checks; // iterate i+1 <= ceiling
  std::optional<OrderReport> bound_order;  // sandwich only: Y1 <= Y2, checked after the fact
  std::vector<double> bound_history;       // norm_sup_y2 + norm_int_z2 per iterate
  double uniform_bound = 0.0;
  bool converged = false;
  std::optional<DiscreteSolution> floor;   // lower envelope / Y1
  std::optional<DiscreteSolution> ceiling; // upper envelope / Y2
  std::optional<DiscreteSolution> final_solution;

  const DiscreteSolution& final() const { return *final_solution; }
  std::size_t iterations() const noexcept { return deltas.size(); }
};

namespace detail {

inline double penalty_constant(const BdsdeProblem& problem, const IterationConfig& cfg) {
  return cfg.K ? *cfg.K : problem.generator.K;
}

inline void require_profile(const BdsdeProblem& problem, AssumptionMode mode, const char* op) {
  const auto report = validate(problem, AssumptionProfile{mode});
  if (report.ok()) return;
  std::ostringstream os;
  os << op << ": " << to_string(mode) << " profile not satisfied:";
  for (const auto& v : report.violations) os << " [" << v.assumption << "] " << v.message << ';';
  throw std::invalid_argument(os.str());
}

inline void check_anchor(const DiscreteSolution& prev, const BrownianBundle& bundle) {
  if (!(prev.grid() == bundle.grid()) || prev.m_outer() != bundle.m_outer() || prev.n_inner() != bundle.n_inner() ||
      prev.d() != bundle.d())
    throw std::invalid_argument("penalized: previous iterate does not match the grid/cloud of the noise bundle");
}

inline double sup_mean_abs_diff(const DiscreteSolution& a, const DiscreteSolution& b) {
  double sup = 0.0;
  const double count = static_cast<double>(a.m_outer() * a.n_inner());
  for (std::size_t k = 0; k < a.n_nodes(); ++k) {
    double s = 0.0;
    for (std::size_t o = 0; o < a.m_outer(); ++o) {
      const auto ya = a.y_cloud(o, k);
      const auto yb = b.y_cloud(o, k);
      for (std::size_t i = 0; i < ya.size(); ++i) s += std::abs(ya[i] - yb[i]);
    }
    sup = std::max(sup, s / count);
  }
  return sup;
}

inline BdsdeProblem with_generator(const BdsdeProblem& p, GeneratorSpec gen) {
  return BdsdeProblem{p.grid, p.d, p.l, std::move(gen), p.terminal, std::nullopt};
}

// sign = -1: -K|y| - K|z| - |f(t,0,0)|; sign = +1: the mirror.
inline GeneratorSpec envelope_generator(const GeneratorSpec& base, double K, double sign, std::size_t d) {
  GeneratorSpec env = base;
  auto f = base.f;
  const std::vector<double> zero(d, 0.0);
  env.f = [f, K, sign, zero](const Site& s, double y, std::span<const double> z) {
    return sign * (K * std::abs(y) + K * euclidean_norm(z) + std::abs(f(s, 0.0, zero)));
  };
  env.K = K;
  env.flags = {true, true, true, true, true};
  env.name = std::string(sign < 0 ? "lower" : "upper") + "_envelope(" + base.name + ")";
  return env;
}

} // namespace detail

/// Lipschitz BDSDE with drift -K|y| - K|z| - |f(t,0,0)| (same g and xi).
inline DiscreteSolution lower_envelope(const BdsdeProblem& problem, const BrownianBundle& bundle,
                                       const IterationConfig& cfg) {
  check(cfg);
  const double K = detail::penalty_constant(problem, cfg);
  return backward_sweep(
      detail::with_generator(problem, detail::envelope_generator(problem.generator, K, -1.0, problem.d)), bundle,
      cfg.solver);
}

/// Lipschitz BDSDE with drift K|y| + K|z| + |f(t,0,0)| (same g and xi).
inline DiscreteSolution upper_envelope(const BdsdeProblem& problem, const BrownianBundle& bundle,
                                       const IterationConfig& cfg) {
  check(cfg);
  const double K = detail::penalty_constant(problem, cfg);
  return backward_sweep(
      detail::with_generator(problem, detail::envelope_generator(problem.generator, K, +1.0, problem.d)), bundle,
      cfg.solver);
}

/// F(t,y,z) = f(t, yp, zp) - K (y - yp) + sign K |z - zp|, with (yp, zp) read
/// from `prev` at the sample being evaluated. Globally Lipschitz with constant
/// K whatever f looks like. The backward coefficient g is kept.
inline GeneratorSpec penalized(const GeneratorSpec& f_base, std::shared_ptr<const DiscreteSolution> prev, double K,
                               int sign) {
  if (sign != 1 && sign != -1) throw std::invalid_argument("penalized: sign must be -1 or +1");
  if (!prev) throw std::invalid_argument("penalized: previous iterate is missing");
  if (!(K >= 0.0)) throw std::invalid_argument("penalized: K must be nonnegative");
  GeneratorSpec out = f_base;
  auto f = f_base.f;
  const double s = static_cast<double>(sign);
  out.f = [f, prev, K, s](const Site& site, double y, std::span<const double> z) {
    if (site.outer >= prev->m_outer() || site.inner >= prev->n_inner() || site.node >= prev->n_nodes())
      throw std::out_of_range("penalized: site outside the anchoring iterate");
    const double yp = prev->y(site.outer, site.inner, site.node);
    const auto zp = prev->z(site.outer, site.inner, site.node);
    return f(site, yp, zp) - K * (y - yp) + s * K * distance(z, zp);
  };
  out.K = K;
  out.flags = {true, true, true, true, true};
  std::ostringstream os;
  os << "penalized" << (sign < 0 ? "-" : "+") << "(" << f_base.name << ")";
  out.name = os.str();
  return out;
}

namespace detail {

// Shared loop of the monotone schemes. `increasing`: iterates should grow.
inline IterationReport iterate_penalized(const BdsdeProblem& problem, const BrownianBundle& bundle,
                                         const IterationConfig& cfg, DiscreteSolution start, int sign,
                                         bool increasing, DiscreteSolution floor, DiscreteSolution ceiling) {
  const double K = penalty_constant(problem, cfg);
  IterationReport report;
  report.direction = cfg.direction;

  auto prev = std::make_shared<const DiscreteSolution>(std::move(start));
  check_anchor(*prev, bundle);
  auto record = [&](const DiscreteSolution& s) {
    report.summaries.push_back(summarize(s, report.summaries.size()));
    const double b = s.norm_sup_y2 + s.norm_int_z2;
    report.bound_history.push_back(b);
    report.uniform_bound = std::max(report.uniform_bound, b);
    if (cfg.keep_iterates) report.iterates.push_back(s);
  };
  record(*prev);

  for (int i = 0; i < cfg.i_max; ++i) {
    const BdsdeProblem step = with_generator(problem, penalized(problem.generator, prev, K, sign));
    auto cur = std::make_shared<const DiscreteSolution>(backward_sweep(step, bundle, cfg.solver, prev.get()));
    const double delta = sup_mean_abs_diff(*prev, *cur);
    report.deltas.push_back(delta);
    report.monotonicity.push_back(increasing ? check_order(*prev, *cur, cfg.order_epsilon, cfg.order_p)
                                             : check_order(*cur, *prev, cfg.order_epsilon, cfg.order_p));
    report.floor_checks.push_back(check_order(floor, *cur, cfg.order_epsilon, cfg.order_p));
    report.ceiling_checks.push_back(check_order(*cur, ceiling, cfg.order_epsilon, cfg.order_p));
    record(*cur);
    prev = std::move(cur);
    if (delta < cfg.tol_iter) {
      report.converged = true;
      break;
    }
  }
  report.final_solution = *prev;
  report.floor = std::move(floor);
  report.ceiling = std::move(ceiling);
  return report;
}

} // namespace detail

/// Increasing penalized iteration from the lower envelope; its limit is the
/// minimal solution. Non-convergence is reported, not thrown.
inline IterationReport run_minimal(const BdsdeProblem& problem, const BrownianBundle& bundle, IterationConfig cfg) {
  check(cfg);
  detail::require_profile(problem, AssumptionMode::minimal_h5, "run_minimal");
  cfg.direction = Direction::minimal;
  DiscreteSolution lower = lower_envelope(problem, bundle, cfg);
  DiscreteSolution upper = upper_envelope(problem, bundle, cfg);
  DiscreteSolution start = lower;
  auto r = detail::iterate_penalized(problem, bundle, cfg, std::move(start), -1, true, std::move(lower),
                                     std::move(upper));
  r.label = "minimal solution";
  return r;
}

/// Decreasing penalized iteration from the upper envelope. The limit bounds
/// every solution from above; it is not claimed to solve the equation itself.
inline IterationReport run_upper_bound(const BdsdeProblem& problem, const BrownianBundle& bundle,
                                       IterationConfig cfg) {
  check(cfg);
  detail::require_profile(problem, AssumptionMode::minimal_h5, "run_upper_bound");
  cfg.direction = Direction::upper_bound;
  DiscreteSolution lower = lower_envelope(problem, bundle, cfg);
  DiscreteSolution upper = upper_envelope(problem, bundle, cfg);
  DiscreteSolution start = upper;
  auto r = detail::iterate_penalized(problem, bundle, cfg, std::move(start), +1, false, std::move(lower),
                                     std::move(upper));
  r.label = "upper bound (not asserted to be a solution)";
  return r;
}

/// Increasing penalized iteration from Y1, the solution of the lower bounding
/// problem, trapped below Y2. No minimality claim is attached to the limit.
inline IterationReport run_sandwich(const BdsdeProblem& problem, const BrownianBundle& bundle, IterationConfig cfg) {
  check(cfg);
  if (!problem.bounding_pair) throw std::invalid_argument("run_sandwich: H2 requires a bounding pair (f1, f2)");
  detail::require_profile(problem, AssumptionMode::sandwich_h2, "run_sandwich (H2)");
  cfg.direction = Direction::sandwich;
  DiscreteSolution y1 = backward_sweep(detail::with_generator(problem, problem.bounding_pair->lower), bundle, cfg.solver);
  DiscreteSolution y2 = backward_sweep(detail::with_generator(problem, problem.bounding_pair->upper), bundle, cfg.solver);
  const OrderReport bounds = check_order(y1, y2, cfg.order_epsilon, cfg.order_p);
  DiscreteSolution start = y1;
  auto r = detail::iterate_penalized(problem, bundle, cfg, std::move(start), -1, true, std::move(y1), std::move(y2));
  r.bound_order = bounds;
  r.label = "solution from the sandwich scheme (no minimality claim)";
  return r;
}

/// Maximal-solution candidate under a right-continuous drift: run_minimal on
/// the problem reflected through y -> -y, then reflect back. Order reports
/// are the reflected ones, which read as "iterates decrease" in the original
/// coordinates; floor and ceiling swap accordingly.
inline IterationReport run_maximal_h6(const BdsdeProblem& problem, const BrownianBundle& bundle, IterationConfig cfg) {
  check(cfg);
  detail::require_profile(problem, AssumptionMode::maximal_h6, "run_maximal_h6");
  IterationReport r = run_minimal(reflected(problem), bundle, cfg);
  r.direction = Direction::maximal_h6;
  r.label = "maximal-solution candidate";
  for (auto& s : r.summaries) {
    for (auto& n : s.profile) {
      n.mean = -n.mean;
      const double lo = -n.ci_hi;
      n.ci_hi = -n.ci_lo;
      n.ci_lo = lo;
    }
    s.y0_mean = -s.y0_mean;
  }
  for (auto& it : r.iterates) it = negated(it);
  std::swap(r.floor_checks, r.ceiling_checks);
  std::optional<DiscreteSolution> new_floor, new_ceiling;
  if (r.ceiling) new_floor = negated(*r.ceiling);
  if (r.floor) new_ceiling = negated(*r.floor);
  r.floor = std::move(new_floor);
  r.ceiling = std::move(new_ceiling);
  r.final_solution = negated(*r.final_solution);
  return r;
}

} // namespace bdsde

#endif // BDSDE_MONOTONE_HPP
