#ifndef BDSDE_TIME_GRID_HPP
#define BDSDE_TIME_GRID_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bdsde {

/// Uniform partition 0 = t_0 < ... < t_n = T of the horizon.
class TimeGrid {
public:
  TimeGrid(double horizon, std::size_t n_steps) : horizon_(horizon), n_steps_(n_steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon))
      throw std::invalid_argument("TimeGrid: horizon must be positive, got " + std::to_string(horizon));
    if (n_steps == 0)
      throw std::invalid_argument("TimeGrid: n_steps must be at least 1");
    dt_ = horizon / static_cast<double>(n_steps);
    nodes_.resize(n_steps + 1);
    for (std::size_t k = 0; k <= n_steps; ++k)
      nodes_[k] = horizon * (static_cast<double>(k) / static_cast<double>(n_steps));
    nodes_.front() = 0.0;
    nodes_.back() = horizon;
  }

  double horizon() const noexcept { return horizon_; }
  std::size_t n_steps() const noexcept { return n_steps_; }
  std::size_t n_nodes() const noexcept { return n_steps_ + 1; }
  double dt() const noexcept { return dt_; }
  double operator[](std::size_t k) const { return nodes_[k]; }
  std::span<const double> nodes() const noexcept { return nodes_; }

  // Nearest node to t, clamped to the grid.
  std::size_t nearest_node(double t) const noexcept {
    if (t <= 0.0) return 0;
    if (t >= horizon_) return n_steps_;
    return static_cast<std::size_t>(std::lround(t / dt_));
  }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) noexcept {
    return a.horizon_ == b.horizon_ && a.n_steps_ == b.n_steps_;
  }

private:
  double horizon_;
  std::size_t n_steps_;
  double dt_;
  std::vector<double> nodes_;
};

inline TimeGrid make_uniform_grid(double horizon, std::size_t n_steps) {
  return TimeGrid(horizon, n_steps);
}

} // namespace bdsde

#endif // BDSDE_TIME_GRID_HPP
