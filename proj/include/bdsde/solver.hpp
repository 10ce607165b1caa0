#ifndef BDSDE_SOLVER_HPP
#define BDSDE_SOLVER_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bdsde/errors.hpp"
#include "bdsde/generator.hpp"
#include "bdsde/noise.hpp"
#include "bdsde/parallel.hpp"
#include "bdsde/problem.hpp"
#include "bdsde/regression.hpp"

namespace bdsde {

struct SolverConfig {
  BasisSpec basis{};
  int picard_inner = 3;
  std::optional<double> clip_threshold{};
  bool record_norms = true;
  std::size_t workers = 0; // 0: BDSDE_THREADS / hardware
};

inline void check(const SolverConfig& c) {
  check(c.basis);
  if (c.picard_inner < 1) throw std::invalid_argument("SolverConfig: picard_inner must be >= 1");
  if (c.clip_threshold && !(*c.clip_threshold > 0.0))
    throw std::invalid_argument("SolverConfig: clip_threshold must be positive");
}

struct SolutionDiagnostics {
  double max_condition = 0.0;      // worst regression condition diagnostic
  std::size_t ridge_fits = 0;      // regressions that fell back to ridge
  std::size_t nan_count = 0;
  double terminal_second_moment = 0.0; // sample mean of xi^2
  bool diagnostic_only = false;    // clipping was active
};

/// Sampled (Y, Z) on the grid for every (outer, inner) sample.
/// Storage is (outer, node, inner) for Y and (outer, node, inner, dim) for Z so
/// that one regression cloud is contiguous.
class DiscreteSolution {
public:
  DiscreteSolution(TimeGrid grid, std::size_t m_outer, std::size_t n_inner, std::size_t d)
      : grid_(std::move(grid)), m_outer_(m_outer), n_inner_(n_inner), d_(d),
        y_(m_outer * grid_.n_nodes() * n_inner, 0.0), z_(m_outer * grid_.n_nodes() * n_inner * d, 0.0) {}

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t m_outer() const noexcept { return m_outer_; }
  std::size_t n_inner() const noexcept { return n_inner_; }
  std::size_t n_nodes() const noexcept { return grid_.n_nodes(); }
  std::size_t d() const noexcept { return d_; }
  std::size_t n_points() const noexcept { return y_.size(); }

  double y(std::size_t outer, std::size_t inner, std::size_t node) const { return y_[y_index(outer, inner, node)]; }
  double& y(std::size_t outer, std::size_t inner, std::size_t node) { return y_[y_index(outer, inner, node)]; }
  std::span<const double> z(std::size_t outer, std::size_t inner, std::size_t node) const {
    return {z_.data() + y_index(outer, inner, node) * d_, d_};
  }
  std::span<double> z(std::size_t outer, std::size_t inner, std::size_t node) {
    return {z_.data() + y_index(outer, inner, node) * d_, d_};
  }

  std::span<const double> y_cloud(std::size_t outer, std::size_t node) const {
    return {y_.data() + y_index(outer, 0, node), n_inner_};
  }
  std::span<double> y_cloud(std::size_t outer, std::size_t node) {
    return {y_.data() + y_index(outer, 0, node), n_inner_};
  }

  std::span<const double> y_values() const noexcept { return y_; }
  std::span<double> y_values() noexcept { return y_; }
  std::span<const double> z_values() const noexcept { return z_; }
  std::span<double> z_values() noexcept { return z_; }

  bool same_shape(const DiscreteSolution& o) const noexcept {
    return grid_ == o.grid_ && m_outer_ == o.m_outer_ && n_inner_ == o.n_inner_ && d_ == o.d_;
  }

  double norm_sup_y2 = 0.0;
  double norm_int_z2 = 0.0;
  SolutionDiagnostics diagnostics;

private:
  std::size_t y_index(std::size_t outer, std::size_t inner, std::size_t node) const noexcept {
    return (outer * grid_.n_nodes() + node) * n_inner_ + inner;
  }

  TimeGrid grid_;
  std::size_t m_outer_;
  std::size_t n_inner_;
  std::size_t d_;
  std::vector<double> y_;
  std::vector<double> z_;
};

/// (sup_t E|Y_t|^2, E int |Z_t|^2 dt) estimated on the grid.
inline std::pair<double, double> solution_norms(const DiscreteSolution& sol) {
  const std::size_t nodes = sol.n_nodes();
  const double count = static_cast<double>(sol.m_outer() * sol.n_inner());
  double sup_y2 = 0.0;
  double int_z2 = 0.0;
  for (std::size_t k = 0; k < nodes; ++k) {
    double sy = 0.0, sz = 0.0;
    for (std::size_t o = 0; o < sol.m_outer(); ++o)
      for (std::size_t i = 0; i < sol.n_inner(); ++i) {
        const double y = sol.y(o, i, k);
        sy += y * y;
        for (double z : sol.z(o, i, k)) sz += z * z;
      }
    sup_y2 = std::max(sup_y2, sy / count);
    if (k + 1 < nodes) int_z2 += sz / count;
  }
  return {sup_y2, int_z2 * sol.grid().dt()};
}

inline void check_compatible(const BdsdeProblem& problem, const BrownianBundle& bundle) {
  if (!(problem.grid == bundle.grid()))
    throw std::invalid_argument("problem and noise bundle live on different time grids");
  if (problem.d != bundle.d() || problem.l != bundle.l())
    throw std::invalid_argument("problem dimensions (d, l) do not match the noise bundle");
}

/// xi for every (outer, inner) sample, laid out outer-major.
inline std::vector<double> terminal_values(const BdsdeProblem& problem, const BrownianBundle& bundle) {
  check_compatible(problem, bundle);
  if (!problem.terminal.payoff) throw std::invalid_argument("terminal payoff is not set");
  const std::size_t m = bundle.m_outer(), ni = bundle.n_inner(), n = bundle.n_steps();
  const std::size_t d = bundle.d(), l = bundle.l();
  std::vector<double> out(m * ni);
  parallel_for(m, [&](std::size_t o) {
    std::vector<double> b((n + 1) * l, 0.0);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < l; ++j) b[(k + 1) * l + j] = b[k * l + j] + bundle.db(o, k)[j];
    std::vector<double> w(d);
    for (std::size_t i = 0; i < ni; ++i) {
      std::fill(w.begin(), w.end(), 0.0);
      for (std::size_t k = 0; k < n; ++k) {
        const auto dw = bundle.dw(o, i, k);
        for (std::size_t j = 0; j < d; ++j) w[j] += dw[j];
      }
      const double xi = problem.terminal.payoff(w, b);
      if (!std::isfinite(xi))
        throw EvaluationError("terminal payoff is not finite at sample (" + std::to_string(o) + ", " +
                                  std::to_string(i) + ")",
                              o, i);
      out[o * ni + i] = xi;
    }
  });
  return out;
}

namespace detail {

struct OuterDiagnostics {
  double max_condition = 0.0;
  std::size_t ridge_fits = 0;
};

} // namespace detail

/// Backward sweep for one BDSDE on a fixed noise bundle.
///
/// Within each outer (fixed B path) cloud, for k = n-1 ... 0:
///   Z_k = proj[Y_{k+1} dW_k / dt]
///   Y_k = proj[Y_{k+1} + f(t_k, Yhat_k, Z_k) dt + g(t_{k+1}, Y_{k+1}, Z_{k+1}) . dB_k]
/// where Yhat_k starts at proj[Y_{k+1}] and is refined by `picard_inner`
/// passes. g is taken at the right end of the step (backward integral).
///
/// `feature_anchor`, when given and the basis asks for it, adds the anchor's Y
/// at node k to the regression features.
inline DiscreteSolution backward_sweep(const BdsdeProblem& problem, const BrownianBundle& bundle,
                                       const SolverConfig& config,
                                       const DiscreteSolution* feature_anchor = nullptr) {
  check(config);
  check_compatible(problem, bundle);
  if (!problem.generator.f) throw std::invalid_argument("generator drift is not set");
  const std::size_t m = bundle.m_outer(), ni = bundle.n_inner(), n = bundle.n_steps();
  const std::size_t d = bundle.d(), l = bundle.l();
  const TimeGrid& grid = problem.grid;
  const double dt = grid.dt();
  const bool use_anchor = feature_anchor != nullptr && config.basis.feature_map == FeatureMap::w_and_anchor_y;
  if (use_anchor && !(feature_anchor->grid() == grid && feature_anchor->m_outer() == m &&
                      feature_anchor->n_inner() == ni))
    throw std::invalid_argument("backward_sweep: feature anchor has a different shape");

  const std::vector<double> xi = terminal_values(problem, bundle);
  DiscreteSolution sol(grid, m, ni, d);
  std::vector<detail::OuterDiagnostics> per_outer(m);
  const GeneratorSpec& gen = problem.generator;

  parallel_for(
      m,
      [&](std::size_t o) {
        // W at every node for this outer cloud: (node, inner, dim)
        std::vector<double> w((n + 1) * ni * d, 0.0);
        for (std::size_t i = 0; i < ni; ++i)
          for (std::size_t k = 0; k < n; ++k) {
            const auto inc = bundle.dw(o, i, k);
            for (std::size_t j = 0; j < d; ++j)
              w[((k + 1) * ni + i) * d + j] = w[(k * ni + i) * d + j] + inc[j];
          }

        auto y_last = sol.y_cloud(o, n);
        std::copy_n(xi.begin() + static_cast<std::ptrdiff_t>(o * ni), ni, y_last.begin());
        // Z at the terminal node stays 0.

        const std::size_t p = d + (use_anchor ? 1 : 0);
        Eigen::MatrixXd features(ni, p);
        Eigen::MatrixXd dw(ni, d);
        Eigen::VectorXd base(ni), target(ni), yhat(ni);
        std::vector<double> gbuf(l);
        detail::OuterDiagnostics diag;

        for (std::size_t kk = n; kk-- > 0;) {
          const std::size_t k = kk;
          for (std::size_t i = 0; i < ni; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
              features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = w[(k * ni + i) * d + j];
              dw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = bundle.dw(o, i, k)[j];
            }
            if (use_anchor)
              features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = feature_anchor->y(o, i, k);
          }
          const LeastSquaresProjector proj(features, config.basis);
          diag.max_condition = std::max(diag.max_condition, proj.condition_diagnostic());
          diag.ridge_fits += proj.ridge_used() ? 1 : 0;

          const auto next = sol.y_cloud(o, k + 1);
          const Eigen::Map<const Eigen::VectorXd> next_y(next.data(), static_cast<Eigen::Index>(ni));
          const Eigen::MatrixXd z = estimate_z(proj, next_y, dw, dt);
          for (std::size_t i = 0; i < ni; ++i) {
            auto zi = sol.z(o, i, k);
            for (std::size_t j = 0; j < d; ++j) zi[j] = z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          }

          const auto db = bundle.db(o, k);
          const double t_next = grid[k + 1];
          for (std::size_t i = 0; i < ni; ++i) {
            gen.noise(t_next, next[i], sol.z(o, i, k + 1), gbuf);
            double gdb = 0.0;
            for (std::size_t j = 0; j < l; ++j) gdb += gbuf[j] * db[j];
            base(static_cast<Eigen::Index>(i)) = next[i] + gdb;
          }

          proj.project(next_y, yhat);
          Site site{grid[k], k, o, 0, {}};
          for (int pass = 0; pass < config.picard_inner; ++pass) {
            for (std::size_t i = 0; i < ni; ++i) {
              site.inner = i;
              site.w = std::span<const double>(w.data() + (k * ni + i) * d, d);
              const auto ii = static_cast<Eigen::Index>(i);
              target(ii) = base(ii) + gen.f(site, yhat(ii), sol.z(o, i, k)) * dt;
            }
            proj.project(target, yhat);
          }

          auto yk = sol.y_cloud(o, k);
          for (std::size_t i = 0; i < ni; ++i) {
            double v = yhat(static_cast<Eigen::Index>(i));
            if (config.clip_threshold) v = std::clamp(v, -*config.clip_threshold, *config.clip_threshold);
            if (!std::isfinite(v))
              throw NumericalDivergence("backward sweep diverged at outer " + std::to_string(o) + ", node " +
                                            std::to_string(k),
                                        o, k);
            yk[i] = v;
          }
          for (std::size_t i = 0; i < ni; ++i)
            for (double zv : sol.z(o, i, k))
              if (!std::isfinite(zv))
                throw NumericalDivergence("Z estimate diverged at outer " + std::to_string(o) + ", node " +
                                              std::to_string(k),
                                          o, k);
        }
        per_outer[o] = diag;
      },
      config.workers);

  for (const auto& dg : per_outer) {
    sol.diagnostics.max_condition = std::max(sol.diagnostics.max_condition, dg.max_condition);
    sol.diagnostics.ridge_fits += dg.ridge_fits;
  }
  double xi2 = 0.0;
  for (double v : xi) xi2 += v * v;
  sol.diagnostics.terminal_second_moment = xi2 / static_cast<double>(xi.size());
  sol.diagnostics.diagnostic_only = config.clip_threshold.has_value();
  if (config.record_norms) {
    const auto [sy, iz] = solution_norms(sol);
    sol.norm_sup_y2 = sy;
    sol.norm_int_z2 = iz;
  }
  return sol;
}

/// Per-outer mean of Y at t_0 (one value per independent B realization).
inline std::vector<double> initial_values(const DiscreteSolution& sol) {
  std::vector<double> out(sol.m_outer());
  for (std::size_t o = 0; o < sol.m_outer(); ++o) {
    double s = 0.0;
    for (double v : sol.y_cloud(o, 0)) s += v;
    out[o] = s / static_cast<double>(sol.n_inner());
  }
  return out;
}

inline DiscreteSolution negated(const DiscreteSolution& sol) {
  DiscreteSolution out = sol;
  for (double& v : out.y_values()) v = -v;
  for (double& v : out.z_values()) v = -v;
  return out;
}

} // namespace bdsde

#endif // BDSDE_SOLVER_HPP
