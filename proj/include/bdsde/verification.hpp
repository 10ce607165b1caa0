#ifndef BDSDE_VERIFICATION_HPP
#define BDSDE_VERIFICATION_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bdsde/monotone.hpp"
#include "bdsde/noise.hpp"
#include "bdsde/order.hpp"
#include "bdsde/problem.hpp"
#include "bdsde/solver.hpp"
#include "bdsde/stats.hpp"

namespace bdsde {

// ---------------------------------------------------------------------------
// Closed-form references
// ---------------------------------------------------------------------------

/// Y' = -(a Y + c0), Y(T) = xi0 at the grid nodes.
inline std::vector<double> oracle_ode(double a, double c0, double xi0, const TimeGrid& grid) {
  std::vector<double> out(grid.n_nodes());
  for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
    const double tau = grid.horizon() - grid[k];
    if (a == 0.0) {
      out[k] = xi0 + c0 * tau;
    } else {
      const double e = std::exp(a * tau);
      out[k] = xi0 * e + (c0 / a) * (e - 1.0);
    }
  }
  return out;
}

/// Reference for xi = W_T, f = g = 0: Y_t = W_t pathwise and Z = 1.
inline DiscreteSolution oracle_martingale(const BrownianBundle& bundle) {
  if (bundle.d() != 1) throw std::invalid_argument("oracle_martingale: needs d = 1");
  DiscreteSolution ref(bundle.grid(), bundle.m_outer(), bundle.n_inner(), 1);
  for (std::size_t o = 0; o < bundle.m_outer(); ++o)
    for (std::size_t i = 0; i < bundle.n_inner(); ++i) {
      double w = 0.0;
      ref.y(o, i, 0) = 0.0;
      ref.z(o, i, 0)[0] = 1.0;
      for (std::size_t k = 0; k < bundle.n_steps(); ++k) {
        w += bundle.dw(o, i, k)[0];
        ref.y(o, i, k + 1) = w;
        ref.z(o, i, k + 1)[0] = 1.0;
      }
    }
  return ref;
}

// ---------------------------------------------------------------------------
// Nonnegativity of linear BDSDEs with a positive source
// ---------------------------------------------------------------------------

struct Lemma22Spec {
  double l = 0.0;
  double m = 0.0;
  std::function<double(double t, double w)> phi = [](double, double) { return 0.0; };
  TerminalSpec terminal;
  NoiseCoefficient g;
};

struct Lemma22Result {
  OrderReport f1_report; // y^1 >= 0 with f1 = l y + m|z| + phi
  OrderReport f2_report; // y^2 >= 0 with f2 = l|y| + m|z| + phi
  bool preconditions_ok = true; // phi >= 0 and xi >= 0 on the samples
  double y0_f1 = 0.0;
  double y0_f2 = 0.0;
};

inline GeneratorSpec lemma22_generator(const Lemma22Spec& spec, bool absolute_y) {
  GeneratorSpec gen = with_noise(builtin_generator(absolute_y ? "lemma22_f2" : "lemma22_f1", {spec.l, spec.m}), spec.g);
  auto base = gen.f;
  auto phi = spec.phi;
  gen.f = [base, phi](const Site& s, double y, std::span<const double> z) {
    const double w = s.w.empty() ? 0.0 : s.w[0];
    return base(s, y, z) + phi(s.t, w);
  };
  gen.name += "+phi";
  return gen;
}

/// Solves both linear BDSDEs on the shared bundle and reports nonnegativity.
inline Lemma22Result lemma22_run(const Lemma22Spec& spec, const BrownianBundle& bundle, const SolverConfig& solver,
                                 double epsilon = kDefaultOrderEpsilon, double p = kDefaultOrderFraction) {
  if (!(spec.g.alpha < 1.0)) throw std::invalid_argument("lemma22_run: g must satisfy H4 (alpha < 1)");
  Lemma22Result r;
  const TimeGrid& grid = bundle.grid();

  BdsdeProblem p1{grid, bundle.d(), bundle.l(), lemma22_generator(spec, false), spec.terminal, std::nullopt};
  BdsdeProblem p2{grid, bundle.d(), bundle.l(), lemma22_generator(spec, true), spec.terminal, std::nullopt};

  for (double v : terminal_values(p1, bundle))
    if (v < 0.0) {
      r.preconditions_ok = false;
      break;
    }
  if (r.preconditions_ok) {
    for (std::size_t o = 0; o < bundle.m_outer() && r.preconditions_ok; ++o)
      for (std::size_t i = 0; i < bundle.n_inner() && r.preconditions_ok; ++i) {
        const auto path = cumulative(bundle, o, i);
        for (std::size_t k = 0; k <= bundle.n_steps(); ++k)
          if (spec.phi(grid[k], path.w[k * bundle.d()]) < 0.0) {
            r.preconditions_ok = false;
            break;
          }
      }
  }

  const DiscreteSolution s1 = backward_sweep(p1, bundle, solver);
  r.f1_report = check_nonnegativity(s1, epsilon, p);
  r.y0_f1 = mean(initial_values(s1));
  const DiscreteSolution s2 = backward_sweep(p2, bundle, solver);
  r.f2_report = check_nonnegativity(s2, epsilon, p);
  r.y0_f2 = mean(initial_values(s2));
  return r;
}

// ---------------------------------------------------------------------------
// Comparison of minimal solutions on coupled noise
// ---------------------------------------------------------------------------

struct ComparisonVerdict {
  std::optional<OrderReport> order_report; // check_order(Y2, Y1); absent when preconditions fail
  bool preconditions_ok = false;
  std::vector<std::string> precondition_failures;
  std::uint64_t seed = 0;
  NoiseConfig noise{};
  double y0_first = 0.0;
  double y0_second = 0.0;
  bool converged_first = false;
  bool converged_second = false;

  bool confirmed() const noexcept { return preconditions_ok && order_report && order_report->pass; }
};

/// Runs the minimal iteration for both problems on one bundle and checks
/// Y^2 <= Y^1, given xi^1 >= xi^2 samplewise and f1 >= f2 on the probes.
inline ComparisonVerdict comparison_experiment(const BdsdeProblem& p1, const BdsdeProblem& p2, const NoiseConfig& noise,
                                               const IterationConfig& cfg, double epsilon = kDefaultOrderEpsilon,
                                               double p = kDefaultOrderFraction) {
  ComparisonVerdict v;
  v.seed = noise.seed;
  v.noise = noise;
  if (!(p1.grid == p2.grid) || p1.d != p2.d || p1.l != p2.l) {
    v.precondition_failures.emplace_back("problems do not share grid and dimensions");
    return v;
  }
  NoiseConfig nc = noise;
  nc.d = p1.d;
  nc.l = p1.l;
  v.noise = nc;
  const BrownianBundle bundle = generate(p1.grid, nc);

  const auto xi1 = terminal_values(p1, bundle);
  const auto xi2 = terminal_values(p2, bundle);
  for (std::size_t q = 0; q < xi1.size(); ++q)
    if (xi1[q] < xi2[q]) {
      v.precondition_failures.emplace_back("xi1 >= xi2 fails at sample " + std::to_string(q));
      break;
    }

  const auto probes = detail::make_probes(p1.grid, p1.d);
  auto probe_f = [&](double t, double y, const std::vector<double>& z) {
    const Site s = detail::probe_site(p1.grid, t);
    return p1.generator.f(s, y, z) >= p2.generator.f(s, y, z) - detail::kProbeTolerance;
  };
  auto probe_g = [&](double t, double y, const std::vector<double>& z) {
    std::vector<double> g1(p1.l), g2(p1.l);
    p1.generator.noise(t, y, z, g1);
    p2.generator.noise(t, y, z, g2);
    return distance(g1, g2) <= detail::kProbeTolerance;
  };
  bool f_ok = true, g_ok = true;
  for (double t : probes.times)
    for (double y : probes.ys)
      for (const auto& z : probes.zs) {
        f_ok = f_ok && probe_f(t, y, z);
        g_ok = g_ok && probe_g(t, y, z);
      }
  for (const auto& q : probes.random) {
    f_ok = f_ok && probe_f(q.t, q.y, q.z);
    g_ok = g_ok && probe_g(q.t, q.y, q.z);
  }
  if (!f_ok) v.precondition_failures.emplace_back("f1 >= f2 fails on the probe lattice");
  if (!g_ok) v.precondition_failures.emplace_back("problems do not share g");

  v.preconditions_ok = v.precondition_failures.empty();
  if (!v.preconditions_ok) return v;

  IterationReport r1 = run_minimal(p1, bundle, cfg);
  r1.floor.reset();
  r1.ceiling.reset();
  IterationReport r2 = run_minimal(p2, bundle, cfg);
  r2.floor.reset();
  r2.ceiling.reset();
  v.order_report = check_order(r2.final(), r1.final(), epsilon, p);
  v.y0_first = mean(initial_values(r1.final()));
  v.y0_second = mean(initial_values(r2.final()));
  v.converged_first = r1.converged;
  v.converged_second = r2.converged;
  return v;
}

} // namespace bdsde

#endif // BDSDE_VERIFICATION_HPP
