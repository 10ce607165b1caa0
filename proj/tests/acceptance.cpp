// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bdsde/bdsde.hpp"
#include "bdsde/experiment.hpp"

using namespace bdsde;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

NoiseConfig noise(std::size_t m, std::size_t ni, std::uint64_t seed = 42) {
  NoiseConfig c;
  c.seed = seed;
  c.m_outer = m;
  c.n_inner = ni;
  return c;
}

BdsdeProblem problem(const TimeGrid& grid, GeneratorSpec f, TerminalSpec xi) {
  return BdsdeProblem{grid, 1, 1, std::move(f), std::move(xi), std::nullopt};
}

BdsdeProblem step_scenario(const TimeGrid& grid) {
  auto f = with_noise(builtin_generator("step_plus_linear", {1.0, 0.0}), builtin_noise("linear_y", {0.3}));
  f.K = 1.0;
  return problem(grid, f, builtin_terminal("abs_w"));
}

bool all_pass(const std::vector<OrderReport>& v, double* worst) {
  bool ok = true;
  for (const auto& r : v) {
    ok = ok && r.pass;
    *worst = std::max(*worst, r.violation_fraction);
  }
  return ok;
}

Outcome ode_oracle() {
  const TimeGrid grid(1.0, 200);
  const auto b = generate(grid, noise(4, 200));
  const auto sol = backward_sweep(problem(grid, builtin_generator("linear", {1.0, 0.0}), builtin_terminal("constant", {1.0})), b, {});
  const double y0 = mean(initial_values(sol));
  const double err = std::abs(y0 - std::exp(1.0));
  return {err <= 0.05, "Y0 = " + fmt("%.6f", y0) + ", |Y0 - e| = " + fmt("%.2e", err) + " (tol 0.05)"};
}

Outcome martingale() {
  const TimeGrid grid(1.0, 100);
  const auto b = generate(grid, noise(32, 10000));
  const auto sol = backward_sweep(problem(grid, builtin_generator("zero"), builtin_terminal("w_terminal")), b, {});
  const auto y0 = initial_values(sol);
  const double se = standard_error(y0);
  const double m0 = mean(y0);
  double zsum = 0.0;
  std::size_t cnt = 0;
  for (std::size_t o = 0; o < sol.m_outer(); ++o)
    for (std::size_t k = 1; k < 100; ++k)
      for (std::size_t i = 0; i < sol.n_inner(); ++i, ++cnt) zsum += sol.z(o, i, k)[0];
  const double zbar = zsum / static_cast<double>(cnt);
  const bool ok = std::abs(m0) <= 4 * se && std::abs(zbar - 1.0) <= 0.1;
  return {ok, "mean Y0 = " + fmt("%.2e", m0) + " (4 SE = " + fmt("%.2e", 4 * se) + "), mean interior Z = " +
                  fmt("%.4f", zbar) + " (tol 0.1)"};
}

Outcome centering() {
  const TimeGrid grid(1.0, 100);
  const auto b = generate(grid, noise(256, 100));
  const auto p = problem(grid, with_noise(builtin_generator("zero"), builtin_noise("linear_y", {0.3})),
                         builtin_terminal("constant", {1.0}));
  const auto y0 = initial_values(backward_sweep(p, b, {}));
  const double se = standard_error(y0);
  const double gap = std::abs(mean(y0) - 1.0);
  return {gap <= 4 * se, "|mean Y0 - 1| = " + fmt("%.2e", gap) + " (4 SE = " + fmt("%.2e", 4 * se) + ")"};
}

Outcome lemma22() {
  const TimeGrid grid(1.0, 100);
  const auto b = generate(grid, noise(32, 2000));
  auto spec = [](TerminalSpec xi) {
    Lemma22Spec s;
    s.l = 0.5;
    s.m = 0.5;
    s.phi = [](double, double) { return 1.0; };
    s.terminal = std::move(xi);
    s.g = builtin_noise("linear_y", {0.2});
    return s;
  };
  const auto pos = lemma22_run(spec(builtin_terminal("abs_w")), b, {}, 0.02, 0.01);
  const auto neg = lemma22_run(spec(builtin_terminal("constant", {-1.0})), b, {}, 0.02, 0.01);
  const bool ok = pos.f1_report.pass && pos.f2_report.pass && !neg.f1_report.pass && !neg.f2_report.pass;
  return {ok, "violations f1 " + fmt("%.4f", pos.f1_report.violation_fraction) + ", f2 " +
                  fmt("%.4f", pos.f2_report.violation_fraction) + "; control (xi = -1) f1 " +
                  fmt("%.4f", neg.f1_report.violation_fraction) + ", f2 " +
                  fmt("%.4f", neg.f2_report.violation_fraction) + " (must fail)"};
}

struct StepRuns {
  IterationReport minimal;
  IterationReport upper;
};

StepRuns step_runs() {
  const TimeGrid grid(1.0, 100);
  const auto b = generate(grid, noise(32, 2000));
  IterationConfig c;
  c.K = 1.0;
  c.tol_iter = 1e-3;
  c.i_max = 25;
  c.order_epsilon = 0.01;
  c.order_p = 0.01;
  return {run_minimal(step_scenario(grid), b, c), run_upper_bound(step_scenario(grid), b, c)};
}

Outcome minimal_iteration(const StepRuns& r) {
  double mono = 0.0, env = 0.0;
  const bool m = all_pass(r.minimal.monotonicity, &mono);
  const bool lo = all_pass(r.minimal.floor_checks, &env);
  const bool hi = all_pass(r.minimal.ceiling_checks, &env);
  const bool ok = r.minimal.converged && m && lo && hi;
  return {ok, "converged " + std::string(r.minimal.converged ? "yes" : "no") + " in " +
                  std::to_string(r.minimal.iterations()) + " iterations (last delta " +
                  fmt("%.2e", r.minimal.deltas.back()) + "), worst ordering violation " + fmt("%.4f", mono) +
                  ", worst envelope violation " + fmt("%.4f", env)};
}

Outcome upper_bound_iteration(const StepRuns& r) {
  double mono = 0.0;
  const bool m = all_pass(r.upper.monotonicity, &mono);
  const auto order = check_order(r.minimal.final(), r.upper.final(), 0.02, 0.01);
  const bool ok = m && order.pass;
  return {ok, "worst decreasing-order violation " + fmt("%.4f", mono) + ", minimal <= upper violation " +
                  fmt("%.4f", order.violation_fraction) + " (mean gap " + fmt("%.2e", order.mean_gap) + ")"};
}

Outcome sandwich() {
  const TimeGrid grid(1.0, 100);
  const auto b = generate(grid, noise(32, 2000));
  auto p = problem(grid, builtin_generator("step_threshold", {1.0}), builtin_terminal("abs_w"));
  p.bounding_pair = BoundingPair{builtin_generator("zero"), builtin_generator("constant", {1.0})};
  IterationConfig c;
  c.order_epsilon = 0.02;
  c.order_p = 0.01;
  const auto r = run_sandwich(p, b, c);
  double worst = r.bound_order->violation_fraction;
  const bool m = all_pass(r.monotonicity, &worst);
  const bool lo = all_pass(r.floor_checks, &worst);
  const bool hi = all_pass(r.ceiling_checks, &worst);
  const bool ok = r.bound_order->pass && m && lo && hi;
  return {ok, "Y1 <= y_i <= y_i+1 <= Y2 worst violation " + fmt("%.4f", worst) + " over " +
                  std::to_string(r.iterations()) + " iterations"};
}

Outcome comparison() {
  const TimeGrid grid(1.0, 100);
  const auto second = step_scenario(grid);
  auto first = second;
  first.generator = shifted(second.generator, 0.5);
  first.terminal = shifted(second.terminal, 0.1);
  IterationConfig c;
  const auto v = comparison_experiment(first, second, noise(32, 2000), c, 0.02, 0.01);
  auto swapped = second;
  swapped.terminal = shifted(second.terminal, -1.0);
  const auto s = comparison_experiment(swapped, second, noise(32, 2000), c, 0.02, 0.01);
  const bool ok = v.confirmed() && v.order_report->mean_gap >= 0.1 && !s.preconditions_ok;
  return {ok, std::string("verdict ") + (v.confirmed() ? "confirmed" : "not confirmed") + ", mean gap " +
                  (v.order_report ? fmt("%.4f", v.order_report->mean_gap) : std::string("n/a")) +
                  " (>= 0.1); swapped preconditions_ok = " + (s.preconditions_ok ? "true" : "false")};
}

Outcome lipschitz_consistency() {
  const TimeGrid grid(1.0, 100);
  const auto b = generate(grid, noise(32, 2000));
  const auto p = problem(grid, with_noise(builtin_generator("linear", {0.5, 0.2}), builtin_noise("linear_y", {0.3})),
                         builtin_terminal("abs_w"));
  IterationConfig c;
  const auto direct = initial_values(backward_sweep(p, b, c.solver));
  const double ref = mean(direct);
  const double tol = 2 * c.tol_iter + 2 * standard_error(direct);
  const auto mn = run_minimal(p, b, c);
  const auto up = run_upper_bound(p, b, c);
  const auto mx = run_maximal_h6(p, b, c);
  const double d1 = std::abs(mean(initial_values(mn.final())) - ref);
  const double d2 = std::abs(mean(initial_values(up.final())) - ref);
  const double d3 = std::abs(mean(initial_values(mx.final())) - ref);
  const bool ok = d1 <= tol && d2 <= tol && d3 <= tol;
  return {ok, "|dY0| minimal " + fmt("%.2e", d1) + ", upper " + fmt("%.2e", d2) + ", maximal " + fmt("%.2e", d3) +
                  " vs direct sweep (tol " + fmt("%.2e", tol) + ")"};
}

Outcome regression_properties() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> N;
  double worst_orth = 0.0, worst_const = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 500;
    Eigen::MatrixXd x(n, 1);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i, 0) = N(rng);
      y(i) = std::cos(x(i, 0)) + 0.3 * N(rng);
    }
    for (int deg = 0; deg <= 5; ++deg) {
      BasisSpec basis;
      basis.degree = deg;
      const auto f = fit(x, y, basis);
      const Eigen::VectorXd r = y - predict(f, x);
      const auto X = design_matrix(x, basis);
      worst_orth = std::max(worst_orth, (X.transpose() * r).cwiseAbs().maxCoeff() / static_cast<double>(n));
      const Eigen::VectorXd c = Eigen::VectorXd::Constant(n, -1.75);
      worst_const = std::max(worst_const, (predict(fit(x, c, basis), x).array() + 1.75).abs().maxCoeff());
    }
  }
  Eigen::MatrixXd dup(200, 2);
  for (Eigen::Index i = 0; i < 200; ++i) dup(i, 0) = dup(i, 1) = N(rng);
  bool ridge = false, finite = false;
  try {
    BasisSpec basis;
    basis.degree = 3;
    const auto f = fit(dup, dup.col(0).array().square().matrix(), basis);
    ridge = f.ridge_used;
    finite = predict(f, dup).allFinite();
  } catch (const std::exception&) {
  }
  const bool ok = worst_orth <= 1e-8 && worst_const <= 1e-12 && ridge && finite;
  return {ok, "max |X^T r|/n = " + fmt("%.2e", worst_orth) + " (<= 1e-8), constant error " + fmt("%.2e", worst_const) +
                  ", ridge on duplicate column " + (ridge && finite ? "yes" : "no")};
}

std::string results_csv(const ScenarioConfig& cfg, const char* threads) {
  setenv("BDSDE_THREADS", threads, 1);
  const auto out = run_scenario(cfg);
  std::ostringstream os;
  write_results_csv(os, out.checks);
  write_plot_csv(os, out.plot);
  return os.str();
}

Outcome determinism() {
  bool ok = true;
  std::string detail;
  for (const char* text : {"scenario = step-minimal\nn_steps = 50\nm_outer = 8\nn_inner = 1000\n",
                           "scenario = comparison\nn_steps = 50\nm_outer = 8\nn_inner = 1000\n"}) {
    const auto cfg = parse_config(text);
    const auto a = results_csv(cfg, "1");
    const auto b = results_csv(cfg, "4");
    const auto c = results_csv(cfg, "4");
    const bool same = a == b && b == c && !a.empty();
    ok = ok && same;
    detail += cfg.scenario + (same ? " identical" : " DIFFERS") + " (" + std::to_string(a.size()) + " bytes); ";
  }
  unsetenv("BDSDE_THREADS");
  return {ok, detail + "workers 1 vs 4, repeated"};
}

} // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += o.pass ? 0 : 1;
    std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
    std::fflush(stdout);
  };

  report(1, "ODE oracle", ode_oracle);
  report(2, "martingale oracle", martingale);
  report(3, "backward-integral centering", centering);
  report(4, "nonnegativity of linear BDSDEs", lemma22);
  std::optional<StepRuns> runs;
  report(5, "minimal iteration", [&] {
    runs = step_runs();
    return minimal_iteration(*runs);
  });
  report(6, "upper-bound iteration", [&] {
    if (!runs) return Outcome{false, "step scenario did not run"};
    return upper_bound_iteration(*runs);
  });
  runs.reset();
  report(7, "sandwich mode", sandwich);
  report(8, "comparison of minimal solutions", comparison);
  report(9, "Lipschitz consistency", lipschitz_consistency);
  report(10, "regression properties", regression_properties);
  report(11, "determinism", determinism);
  std::printf("%d of 11 criteria passed\n", 11 - failures);
  return failures == 0 ? 0 : 1;
}
