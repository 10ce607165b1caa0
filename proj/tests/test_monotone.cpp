#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "bdsde/monotone.hpp"

using namespace bdsde;

namespace {

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
  return problem(grid, with_noise(builtin_generator("step_plus_linear", {1.0, 0.0}), builtin_noise("linear_y", {0.3})),
                 builtin_terminal("abs_w"));
}

double eval(const GeneratorSpec& g, const Site& s, double y, double z) {
  const double zs[] = {z};
  return g.f(s, y, zs);
}

std::shared_ptr<const DiscreteSolution> constant_solution(const TimeGrid& grid, std::size_t m, std::size_t ni,
                                                          double y, double z) {
  auto sol = std::make_shared<DiscreteSolution>(grid, m, ni, 1);
  for (double& v : sol->y_values()) v = y;
  for (double& v : sol->z_values()) v = z;
  return sol;
}

} // namespace

TEST(Envelopes, ZeroProblemStaysZero) {
  const auto grid = make_uniform_grid(1.0, 10);
  const auto b = generate(grid, noise(2, 100));
  const auto p = problem(grid, builtin_generator("zero"), builtin_terminal("constant", {0.0}));
  for (double K : {0.0, 1.0, 5.0}) {
    IterationConfig c;
    c.K = K;
    const auto lo = lower_envelope(p, b, c);
    const auto up = upper_envelope(p, b, c);
    for (double y : lo.y_values()) EXPECT_EQ(y, 0.0);
    for (double y : up.y_values()) EXPECT_EQ(y, 0.0);
  }
}

TEST(Envelopes, SignsFollowDrift) {
  const auto grid = make_uniform_grid(1.0, 20);
  const auto b = generate(grid, noise(4, 300));
  IterationConfig c;
  c.K = 1.0;
  const auto lo = lower_envelope(problem(grid, builtin_generator("step_threshold", {1.0}), builtin_terminal("constant", {0.0})), b, c);
  for (double y : initial_values(lo)) EXPECT_LE(y, 0.0);
  const auto up = upper_envelope(problem(grid, builtin_generator("zero"), builtin_terminal("constant", {1.0})), b, c);
  for (double y : initial_values(up)) EXPECT_GE(y, 1.0);
  // deterministic case Y' = -K Y, Y(T) = 1: replay the Picard passes of each step
  const double dt = grid.dt();
  double y = 1.0;
  for (std::size_t k = 0; k < grid.n_steps(); ++k) {
    double guess = y;
    for (int pass = 0; pass < c.solver.picard_inner; ++pass) guess = y + dt * guess;
    y = guess;
  }
  EXPECT_NEAR(mean(initial_values(up)), y, 1e-9);
  EXPECT_NEAR(y, std::exp(1.0), 0.1);
}

TEST(Envelopes, SymmetricUnderFlip) {
  const auto grid = make_uniform_grid(1.0, 10);
  const auto b = generate(grid, noise(3, 200));
  const auto p = problem(grid, builtin_generator("constant", {0.5}), builtin_terminal("w_terminal"));
  auto q = p;
  q.terminal = negated(p.terminal);
  IterationConfig c;
  c.K = 1.0;
  const auto lo = lower_envelope(p, b, c);
  const auto up = upper_envelope(q, b, c);
  for (std::size_t s = 0; s < lo.n_points(); ++s) EXPECT_NEAR(lo.y_values()[s], -up.y_values()[s], 1e-12);
}

TEST(Penalized, VanishesAtAnchor) {
  const auto grid = make_uniform_grid(1.0, 4);
  auto prev = std::make_shared<DiscreteSolution>(grid, 2, 3, 1);
  double v = -1.1;
  for (double& y : prev->y_values()) y = (v += 0.37);
  for (double& z : prev->z_values()) z = (v -= 0.21);
  const auto base = builtin_generator("step_plus_linear", {1.0, 0.5});
  for (int sign : {-1, 1}) {
    const auto F = penalized(base, prev, 2.0, sign);
    for (std::size_t o = 0; o < 2; ++o)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 5; ++k) {
          const Site s{grid[k], k, o, i, {}};
          const double yp = prev->y(o, i, k), zp = prev->z(o, i, k)[0];
          EXPECT_EQ(eval(F, s, yp, zp), eval(base, s, yp, zp));
        }
  }
}

TEST(Penalized, StepBaseAtHalf) {
  const auto grid = make_uniform_grid(1.0, 4);
  const auto prev = constant_solution(grid, 1, 2, 0.5, 0.0);
  const auto base = builtin_generator("step_threshold", {1.0});
  const double K = 1.5;
  for (int sign : {-1, 1}) {
    const auto F = penalized(base, prev, K, sign);
    for (double y : {-1.0, 0.5, 2.0})
      for (double z : {-0.7, 0.0, 1.3})
        EXPECT_DOUBLE_EQ(eval(F, Site{0.0, 1, 0, 1, {}}, y, z), 0.0 - K * (y - 0.5) + sign * K * std::abs(z));
  }
}

TEST(Penalized, LipschitzSpotCheckWithExactlyK) {
  const auto grid = make_uniform_grid(1.0, 4);
  const auto prev = constant_solution(grid, 1, 1, 0.25, -0.5);
  for (double K : {0.5, 1.0, 3.0})
    for (int sign : {-1, 1}) {
      const auto F = penalized(builtin_generator("step_plus_linear", {1.0, 0.0}), prev, K, sign);
      EXPECT_EQ(F.K, K);
      EXPECT_TRUE(spot_check_lipschitz(F, grid, 1).ok()) << "K " << K << " sign " << sign;
      auto understated = F;
      understated.K = 0.5 * K;
      EXPECT_FALSE(spot_check_lipschitz(understated, grid, 1).ok());
    }
}

TEST(Penalized, RejectsBadInputs) {
  const auto grid = make_uniform_grid(1.0, 4);
  const auto prev = constant_solution(grid, 1, 2, 0.0, 0.0);
  const auto base = builtin_generator("zero");
  EXPECT_THROW(penalized(base, prev, 1.0, 0), std::invalid_argument);
  EXPECT_THROW(penalized(base, nullptr, 1.0, 1), std::invalid_argument);
  const auto F = penalized(base, prev, 1.0, 1);
  EXPECT_THROW(eval(F, Site{0.0, 0, 5, 0, {}}, 0.0, 0.0), std::out_of_range);
}

TEST(RunMinimal, LipschitzFixedPointMatchesDirectSweep) {
  const auto grid = make_uniform_grid(1.0, 50);
  const auto b = generate(grid, noise(2, 100));
  const auto p = problem(grid, builtin_generator("linear", {1.0, 0.0}), builtin_terminal("constant", {1.0}));
  IterationConfig c;
  const auto r = run_minimal(p, b, c);
  ASSERT_TRUE(r.converged);
  const double direct = mean(initial_values(backward_sweep(p, b, c.solver)));
  EXPECT_NEAR(mean(initial_values(r.final())), direct, 2 * c.tol_iter);
}

TEST(RunMinimal, NonConvergenceIsReported) {
  const auto grid = make_uniform_grid(1.0, 10);
  const auto b = generate(grid, noise(2, 100));
  IterationConfig c;
  c.i_max = 1;
  IterationReport r;
  ASSERT_NO_THROW(r = run_minimal(step_scenario(grid), b, c));
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations(), 1u);
  EXPECT_EQ(r.label, "minimal solution");
}

TEST(RunMinimal, RejectsBadConfigAndProfile) {
  const auto grid = make_uniform_grid(1.0, 10);
  const auto b = generate(grid, noise(2, 100));
  IterationConfig c;
  c.tol_iter = 0.0;
  EXPECT_THROW(run_minimal(step_scenario(grid), b, c), std::invalid_argument);
  c = {};
  c.i_max = 0;
  EXPECT_THROW(run_minimal(step_scenario(grid), b, c), std::invalid_argument);
  auto p = step_scenario(grid);
  p.generator.alpha = 1.0;
  EXPECT_THROW(run_minimal(p, b, {}), std::invalid_argument);
}

class StepScenario : public ::testing::Test {
protected:
  static void SetUpTestSuite() {
    grid_ = std::make_unique<TimeGrid>(1.0, 50);
    bundle_ = std::make_unique<BrownianBundle>(generate(*grid_, noise(8, 1000, 7)));
    IterationConfig c;
    c.keep_iterates = true;
    minimal_ = std::make_unique<IterationReport>(run_minimal(step_scenario(*grid_), *bundle_, c));
    upper_ = std::make_unique<IterationReport>(run_upper_bound(step_scenario(*grid_), *bundle_, c));
  }
  static void TearDownTestSuite() {
    minimal_.reset();
    upper_.reset();
    bundle_.reset();
    grid_.reset();
  }
  static std::unique_ptr<TimeGrid> grid_;
  static std::unique_ptr<BrownianBundle> bundle_;
  static std::unique_ptr<IterationReport> minimal_;
  static std::unique_ptr<IterationReport> upper_;
};

std::unique_ptr<TimeGrid> StepScenario::grid_;
std::unique_ptr<BrownianBundle> StepScenario::bundle_;
std::unique_ptr<IterationReport> StepScenario::minimal_;
std::unique_ptr<IterationReport> StepScenario::upper_;

TEST_F(StepScenario, BothDirectionsConverge) {
  EXPECT_TRUE(minimal_->converged);
  EXPECT_TRUE(upper_->converged);
  EXPECT_LT(minimal_->deltas.back(), 1e-3);
  EXPECT_EQ(minimal_->iterates.size(), minimal_->iterations() + 1);
}

TEST_F(StepScenario, ConsecutiveIteratesOrdered) {
  for (const auto& r : minimal_->monotonicity) EXPECT_TRUE(r.pass) << r.violation_fraction;
  for (const auto& r : upper_->monotonicity) EXPECT_TRUE(r.pass) << r.violation_fraction;
  // independent recomputation from the stored iterates
  for (std::size_t i = 0; i + 1 < minimal_->iterates.size(); ++i)
    EXPECT_TRUE(check_order(minimal_->iterates[i], minimal_->iterates[i + 1], 0.01, 0.01).pass);
}

TEST_F(StepScenario, IteratesStayBetweenEnvelopes) {
  for (const auto& r : minimal_->floor_checks) EXPECT_TRUE(r.pass);
  for (const auto& r : minimal_->ceiling_checks) EXPECT_TRUE(r.pass);
  for (const auto& r : upper_->floor_checks) EXPECT_TRUE(r.pass);
  for (const auto& r : upper_->ceiling_checks) EXPECT_TRUE(r.pass);
}

TEST_F(StepScenario, DeltasDecreaseFromIterationTwo) {
  for (std::size_t i = 2; i < minimal_->deltas.size(); ++i) EXPECT_LT(minimal_->deltas[i], minimal_->deltas[i - 1]);
  for (std::size_t i = 2; i < upper_->deltas.size(); ++i) EXPECT_LT(upper_->deltas[i], upper_->deltas[i - 1]);
}

TEST_F(StepScenario, MinimalBelowUpperBound) {
  EXPECT_TRUE(check_order(minimal_->final(), upper_->final(), 0.02, 0.01).pass);
}

// Sup-norm part capped by the node-wise second moment of the wider envelope.
TEST_F(StepScenario, UniformBoundControlledByEnvelopes) {
  for (const auto* r : {minimal_.get(), upper_.get()}) {
    ASSERT_TRUE(std::isfinite(r->uniform_bound));
    const auto& lo = *r->floor;
    const auto& up = *r->ceiling;
    double cap = 0.0;
    for (std::size_t k = 0; k < lo.n_nodes(); ++k) {
      double s = 0.0;
      for (std::size_t o = 0; o < lo.m_outer(); ++o)
        for (std::size_t i = 0; i < lo.n_inner(); ++i)
          s += std::max(std::pow(lo.y(o, i, k), 2), std::pow(up.y(o, i, k), 2));
      cap = std::max(cap, s / static_cast<double>(lo.m_outer() * lo.n_inner()));
    }
    for (const auto& s : r->summaries) EXPECT_LE(s.norm_sup_y2, 1.01 * cap);
  }
}

TEST_F(StepScenario, UniformBoundStableAfterThirdIterate) {
  for (const auto* r : {minimal_.get(), upper_.get()}) {
    ASSERT_GT(r->bound_history.size(), 4u);
    const double early = *std::max_element(r->bound_history.begin(), r->bound_history.begin() + 4);
    EXPECT_LE(r->uniform_bound, 1.1 * early) << r->label << ": growth " << r->uniform_bound / early - 1.0;
  }
}

TEST_F(StepScenario, UpperBoundNotLabelledSolution) {
  EXPECT_NE(upper_->label.find("not asserted"), std::string::npos);
  EXPECT_EQ(upper_->direction, Direction::upper_bound);
}

TEST(RunUpperBound, LipschitzLimitsCoincide) {
  const auto grid = make_uniform_grid(1.0, 30);
  const auto b = generate(grid, noise(4, 500));
  const auto p = problem(grid, with_noise(builtin_generator("linear", {0.5, 0.2}), builtin_noise("linear_y", {0.3})),
                         builtin_terminal("abs_w"));
  IterationConfig c;
  const auto lo = run_minimal(p, b, c);
  const auto up = run_upper_bound(p, b, c);
  const auto mx = run_maximal_h6(p, b, c);
  ASSERT_TRUE(lo.converged && up.converged && mx.converged);
  const double y_lo = mean(initial_values(lo.final()));
  EXPECT_NEAR(mean(initial_values(up.final())), y_lo, 4 * c.tol_iter);
  EXPECT_NEAR(mean(initial_values(mx.final())), y_lo, 4 * c.tol_iter);
}

TEST(RunMaximal, ReflectionIsBitIdentical) {
  const auto grid = make_uniform_grid(1.0, 20);
  const auto b = generate(grid, noise(3, 300));
  const auto p = step_scenario(grid);
  IterationConfig c;
  const auto mn = run_minimal(p, b, c);
  const auto mx = run_maximal_h6(reflected(p), b, c);
  const auto a = mn.final().y_values();
  const auto m = mx.final().y_values();
  ASSERT_EQ(a.size(), m.size());
  for (std::size_t s = 0; s < a.size(); ++s) ASSERT_EQ(m[s], -a[s]) << "point " << s;
  EXPECT_EQ(mn.deltas, mx.deltas);
}

TEST(RunMaximal, RightContinuousStepConverges) {
  const auto grid = make_uniform_grid(1.0, 30);
  const auto b = generate(grid, noise(4, 500));
  const auto p = problem(grid, with_noise(builtin_generator("step_threshold_rc", {1.0}), builtin_noise("linear_y", {0.3})),
                         builtin_terminal("abs_w"));
  const auto r = run_maximal_h6(p, b, {});
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.direction, Direction::maximal_h6);
  // maximal iterates decrease: the reflected increasing checks carry over
  for (const auto& o : r.monotonicity) EXPECT_TRUE(o.pass);
  EXPECT_THROW(run_maximal_h6(step_scenario(grid), b, {}), std::invalid_argument);
}

TEST(RunSandwich, DegenerateBoundsNeedNoIteration) {
  const auto grid = make_uniform_grid(1.0, 20);
  const auto b = generate(grid, noise(3, 300));
  auto p = problem(grid, builtin_generator("linear", {0.5, 0.1}), builtin_terminal("abs_w"));
  p.bounding_pair = BoundingPair{p.generator, p.generator};
  const auto r = run_sandwich(p, b, {});
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations(), 1u);
  ASSERT_TRUE(r.bound_order);
  EXPECT_EQ(r.bound_order->violation_fraction, 0.0);
  EXPECT_EQ(r.bound_order->mean_gap, 0.0);
  EXPECT_EQ(r.label.find("minimal solution"), std::string::npos);
}

TEST(RunSandwich, StepBetweenZeroAndOne) {
  const auto grid = make_uniform_grid(1.0, 30);
  const auto b = generate(grid, noise(4, 500));
  auto p = problem(grid, builtin_generator("step_threshold", {1.0}), builtin_terminal("abs_w"));
  p.bounding_pair = BoundingPair{builtin_generator("zero"), builtin_generator("constant", {1.0})};
  const auto r = run_sandwich(p, b, {});
  EXPECT_TRUE(r.converged);
  EXPECT_TRUE(r.bound_order->pass);
  for (const auto& o : r.monotonicity) EXPECT_TRUE(o.pass) << "fraction " << o.violation_fraction;
  for (const auto& o : r.floor_checks) EXPECT_TRUE(o.pass) << "fraction " << o.violation_fraction;
  for (const auto& o : r.ceiling_checks) EXPECT_TRUE(o.pass) << "fraction " << o.violation_fraction;
}

TEST(RunSandwich, MissingPairCitesH2) {
  const auto grid = make_uniform_grid(1.0, 10);
  const auto b = generate(grid, noise(2, 50));
  try {
    run_sandwich(problem(grid, builtin_generator("step_threshold", {1.0}), builtin_terminal("abs_w")), b, {});
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("H2"), std::string::npos);
  }
}

TEST(NodeProfile, CiBracketsMean) {
  const auto grid = make_uniform_grid(1.0, 10);
  const auto b = generate(grid, noise(4, 200));
  const auto sol = backward_sweep(step_scenario(grid), b, {});
  const auto prof = node_profile(sol);
  ASSERT_EQ(prof.size(), 11u);
  for (const auto& s : prof) {
    EXPECT_LE(s.ci_lo, s.mean);
    EXPECT_GE(s.ci_hi, s.mean);
  }
  EXPECT_EQ(prof.back().t, 1.0);
}
