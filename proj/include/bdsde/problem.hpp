#ifndef BDSDE_PROBLEM_HPP
#define BDSDE_PROBLEM_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bdsde/generator.hpp"
#include "bdsde/time_grid.hpp"

namespace bdsde {

enum class TerminalKind { constant, function_of_w, function_of_w_and_b };

/// Terminal condition xi. The payoff receives W_T (d values) and the whole
/// B path at the grid nodes, (n+1) x l row-major with B_0 = 0.
struct TerminalSpec {
  TerminalKind kind = TerminalKind::constant;
  std::string name;
  std::function<double(std::span<const double> w_terminal, std::span<const double> b_path)> payoff;
};

/// Terminal catalog:
///   constant(c)      xi = c
///   w_terminal       xi = W_T (first component)
///   abs_w            xi = |W_T|
///   w_plus_b         xi = W_T + B_T (first components)
inline TerminalSpec builtin_terminal(const std::string& name, std::span<const double> params) {
  TerminalSpec spec;
  spec.name = detail::describe(name, params);
  if (name == "constant") {
    detail::require_params(name, params, 1);
    const double c = params[0];
    spec.kind = TerminalKind::constant;
    spec.payoff = [c](std::span<const double>, std::span<const double>) { return c; };
  } else if (name == "w_terminal") {
    detail::require_params(name, params, 0);
    spec.kind = TerminalKind::function_of_w;
    spec.payoff = [](std::span<const double> w, std::span<const double>) { return w[0]; };
  } else if (name == "abs_w") {
    detail::require_params(name, params, 0);
    spec.kind = TerminalKind::function_of_w;
    spec.payoff = [](std::span<const double> w, std::span<const double>) { return euclidean_norm(w); };
  } else if (name == "w_plus_b") {
    detail::require_params(name, params, 0);
    spec.kind = TerminalKind::function_of_w_and_b;
    // Last entry of the path, i.e. the l-th component of B_T.
    spec.payoff = [](std::span<const double> w, std::span<const double> b) { return w[0] + b.back(); };
  } else {
    throw std::invalid_argument("unknown terminal '" + name + "'; valid: constant, w_terminal, abs_w, w_plus_b");
  }
  return spec;
}

inline TerminalSpec builtin_terminal(const std::string& name, std::initializer_list<double> params = {}) {
  return builtin_terminal(name, std::span<const double>(params.begin(), params.size()));
}

inline TerminalSpec shifted(TerminalSpec spec, double shift) {
  auto base = spec.payoff;
  spec.payoff = [base, shift](std::span<const double> w, std::span<const double> b) { return base(w, b) + shift; };
  std::ostringstream os;
  os.precision(17);
  os << spec.name << (shift < 0 ? "" : "+") << shift;
  spec.name = os.str();
  return spec;
}

inline TerminalSpec negated(TerminalSpec spec) {
  auto base = spec.payoff;
  spec.payoff = [base](std::span<const double> w, std::span<const double> b) { return -base(w, b); };
  spec.name = "-(" + spec.name + ")";
  return spec;
}

struct BoundingPair {
  GeneratorSpec lower; // f1 <= f
  GeneratorSpec upper; // f <= f2
};

struct BdsdeProblem {
  TimeGrid grid;
  std::size_t d = 1;
  std::size_t l = 1;
  GeneratorSpec generator;
  TerminalSpec terminal;
  std::optional<BoundingPair> bounding_pair;
};

/// The reflected problem y -> -y: terminal -xi, generator `reflected(f, g)`.
inline BdsdeProblem reflected(const BdsdeProblem& p) {
  BdsdeProblem out{p.grid, p.d, p.l, reflected(p.generator), negated(p.terminal), std::nullopt};
  if (p.bounding_pair) {
    // -f2 reflected bounds -f reflected from below.
    out.bounding_pair = BoundingPair{reflected(p.bounding_pair->upper), reflected(p.bounding_pair->lower)};
  }
  return out;
}

enum class AssumptionMode { sandwich_h2, minimal_h5, maximal_h6 };

inline const char* to_string(AssumptionMode m) {
  switch (m) {
  case AssumptionMode::sandwich_h2: return "SANDWICH_H2";
  case AssumptionMode::minimal_h5: return "MINIMAL_H5";
  case AssumptionMode::maximal_h6: return "MAXIMAL_H6";
  }
  return "?";
}

struct AssumptionProfile {
  AssumptionMode mode = AssumptionMode::minimal_h5;
};

struct ProbePoint {
  double t = 0.0;
  double y = 0.0;
  std::vector<double> z;
};

struct Violation {
  std::string assumption; // "H1" ... "H6"
  std::string message;
  std::optional<ProbePoint> witness;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const noexcept { return violations.empty(); }
};

namespace detail {

inline constexpr double kProbeTolerance = 1e-9;
inline constexpr double kProbeLattice[] = {-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0};
inline constexpr std::size_t kRandomProbes = 100;
inline constexpr std::uint64_t kProbeSeed = 0x5eed'b05d'e000'0001ULL;

struct ProbeSet {
  std::vector<double> times;
  std::vector<double> ys;
  std::vector<std::vector<double>> zs;
  std::vector<ProbePoint> random;
};

inline ProbeSet make_probes(const TimeGrid& grid, std::size_t d) {
  ProbeSet p;
  p.times = {0.0, grid.horizon() / 2.0, grid.horizon()};
  for (double v : kProbeLattice) {
    p.ys.push_back(v);
    p.zs.emplace_back(d, v);
  }
  std::mt19937_64 rng(kProbeSeed);
  std::uniform_real_distribution<double> ut(0.0, grid.horizon());
  std::uniform_real_distribution<double> uv(-3.0, 3.0);
  for (std::size_t i = 0; i < kRandomProbes; ++i) {
    ProbePoint q;
    q.t = ut(rng);
    q.y = uv(rng);
    q.z.resize(d);
    for (double& z : q.z) z = uv(rng);
    p.random.push_back(std::move(q));
  }
  return p;
}

class ViolationSink {
public:
  explicit ViolationSink(ValidationReport& r) : report_(r) {}

  // Keeps the first witness per (assumption, message) so the report stays readable.
  void add(const std::string& id, const std::string& msg, std::optional<ProbePoint> witness = std::nullopt) {
    for (const auto& v : report_.violations)
      if (v.assumption == id && v.message == msg) return;
    report_.violations.push_back({id, msg, std::move(witness)});
  }

private:
  ValidationReport& report_;
};

inline Site probe_site(const TimeGrid& grid, double t) { return Site{t, grid.nearest_node(t), 0, 0, {}}; }

// H3: f(t,y1,z) - f(t,y2,z) >= -K (y1 - y2) for y1 >= y2.
inline void check_left_lipschitz(const GeneratorSpec& g, const TimeGrid& grid, const ProbeSet& p,
                                 const std::string& who, ViolationSink& sink) {
  auto probe = [&](double t, double y1, double y2, const std::vector<double>& z) {
    if (y1 < y2) std::swap(y1, y2);
    const Site s = probe_site(grid, t);
    const double diff = g.f(s, y1, z) - g.f(s, y2, z);
    if (!(diff + g.K * (y1 - y2) >= -kProbeTolerance))
      sink.add("H3", who + " violates the left-Lipschitz bound with K=" + std::to_string(g.K), ProbePoint{t, y1, z});
  };
  for (double t : p.times)
    for (const auto& z : p.zs)
      for (double y1 : p.ys)
        for (double y2 : p.ys) probe(t, y1, y2, z);
  for (std::size_t i = 0; i + 1 < p.random.size(); ++i)
    probe(p.random[i].t, p.random[i].y, p.random[i + 1].y, p.random[i].z);
}

// |f(t,y,z1) - f(t,y,z2)| <= K |z1 - z2|.
inline void check_lipschitz_z(const GeneratorSpec& g, const TimeGrid& grid, const ProbeSet& p,
                              const std::string& who, const std::string& id, ViolationSink& sink) {
  auto probe = [&](double t, double y, const std::vector<double>& z1, const std::vector<double>& z2) {
    const Site s = probe_site(grid, t);
    const double diff = std::abs(g.f(s, y, z1) - g.f(s, y, z2));
    if (!(diff <= g.K * distance(z1, z2) + kProbeTolerance))
      sink.add(id, who + " is not Lipschitz in z with K=" + std::to_string(g.K), ProbePoint{t, y, z1});
  };
  for (double t : p.times)
    for (double y : p.ys)
      for (const auto& z1 : p.zs)
        for (const auto& z2 : p.zs) probe(t, y, z1, z2);
  for (std::size_t i = 0; i + 1 < p.random.size(); ++i)
    probe(p.random[i].t, p.random[i].y, p.random[i].z, p.random[i + 1].z);
}

// H4: |g(t,y1,z1) - g(t,y2,z2)|^2 <= c |y1-y2|^2 + alpha |z1-z2|^2.
inline void check_noise_contraction(const GeneratorSpec& g, std::size_t l, const ProbeSet& p,
                                    ViolationSink& sink) {
  std::vector<double> g1(l), g2(l);
  auto probe = [&](double t, double y1, const std::vector<double>& z1, double y2, const std::vector<double>& z2) {
    g.noise(t, y1, z1, g1);
    g.noise(t, y2, z2, g2);
    const double lhs = distance(g1, g2) * distance(g1, g2);
    const double dz = distance(z1, z2);
    const double rhs = g.c * (y1 - y2) * (y1 - y2) + g.alpha * dz * dz;
    if (!(lhs <= rhs + kProbeTolerance))
      sink.add("H4", "g violates |dg|^2 <= c|dy|^2 + alpha|dz|^2", ProbePoint{t, y1, z1});
  };
  for (double t : p.times)
    for (std::size_t a = 0; a < p.ys.size(); ++a)
      for (std::size_t b = 0; b < p.ys.size(); ++b)
        for (std::size_t za = 0; za < p.zs.size(); za += 3)
          for (std::size_t zb = 0; zb < p.zs.size(); zb += 2) probe(t, p.ys[a], p.zs[za], p.ys[b], p.zs[zb]);
  for (std::size_t i = 0; i + 1 < p.random.size(); ++i)
    probe(p.random[i].t, p.random[i].y, p.random[i].z, p.random[i + 1].y, p.random[i + 1].z);
}

// H5: |f(t,y,0)| <= |f(t,0,0)| + K|y|.
inline void check_linear_growth(const GeneratorSpec& g, std::size_t d, const TimeGrid& grid, const ProbeSet& p,
                                ViolationSink& sink) {
  const std::vector<double> zero(d, 0.0);
  auto probe = [&](double t, double y) {
    const Site s = probe_site(grid, t);
    const double lhs = std::abs(g.f(s, y, zero));
    const double rhs = std::abs(g.f(s, 0.0, zero)) + g.K * std::abs(y);
    if (!(lhs <= rhs + kProbeTolerance))
      sink.add("H5", "f violates |f(t,y,0)| <= |f(t,0,0)| + K|y| with K=" + std::to_string(g.K),
               ProbePoint{t, y, zero});
  };
  for (double t : p.times)
    for (double y : p.ys) probe(t, y);
  for (const auto& q : p.random) probe(q.t, q.y);
}

inline void check_bounding(const BdsdeProblem& problem, const ProbeSet& p, ViolationSink& sink) {
  const auto& pair = *problem.bounding_pair;
  auto probe = [&](double t, double y, const std::vector<double>& z) {
    const Site s = probe_site(problem.grid, t);
    const double f = problem.generator.f(s, y, z);
    if (!(pair.lower.f(s, y, z) <= f + kProbeTolerance))
      sink.add("H2", "lower bounding generator exceeds f", ProbePoint{t, y, z});
    if (!(f <= pair.upper.f(s, y, z) + kProbeTolerance))
      sink.add("H2", "f exceeds upper bounding generator", ProbePoint{t, y, z});
  };
  for (double t : p.times)
    for (double y : p.ys)
      for (const auto& z : p.zs) probe(t, y, z);
  for (const auto& q : p.random) probe(q.t, q.y, q.z);
}

} // namespace detail

/// Checks the declared flags a mode needs and falsification-probes the
/// declared constants on a fixed lattice plus seeded random points.
inline ValidationReport validate(const BdsdeProblem& problem, const AssumptionProfile& profile) {
  ValidationReport report;
  detail::ViolationSink sink(report);
  const GeneratorSpec& gen = problem.generator;
  const GeneratorFlags& fl = gen.flags;

  if (problem.d == 0) sink.add("dims", "W dimension d must be positive");
  if (problem.l == 0) sink.add("dims", "B dimension l must be positive");
  if (!(gen.K >= 0.0)) sink.add("H1", "K must be nonnegative");
  if (!(gen.c >= 0.0)) sink.add("H4", "c must be nonnegative");
  if (!(gen.alpha >= 0.0)) sink.add("H4", "alpha must be nonnegative");
  if (!(gen.alpha < 1.0)) sink.add("H4", "H4: alpha must be < 1");
  if (!gen.f) sink.add("H1", "drift f is not set");
  if (!report.ok()) return report;

  const auto mode = profile.mode;
  const bool need_h1 = mode != AssumptionMode::maximal_h6;
  const bool need_h5 = mode != AssumptionMode::sandwich_h2;
  const bool need_h6 = mode == AssumptionMode::maximal_h6;

  if (need_h1 && !fl.f_left_continuous) sink.add("H1", "H1: f must be declared left-continuous in y");
  if (!fl.f_lipschitz_z) sink.add(need_h6 ? "H6" : "H1", "f must be declared Lipschitz in z");
  if (!fl.f_left_lipschitz) sink.add("H3", "H3: f must be declared left-Lipschitz in y");
  if (need_h5 && !fl.f_linear_growth_h5) sink.add("H5", "H5: f must be declared of linear growth");
  if (need_h6 && !fl.f_right_continuous_h6) sink.add("H6", "H6: f must be declared right-continuous in y");
  if (mode == AssumptionMode::sandwich_h2 && !problem.bounding_pair)
    sink.add("H2", "H2: bounding generators required");

  const auto probes = detail::make_probes(problem.grid, problem.d);
  detail::check_left_lipschitz(gen, problem.grid, probes, "f", sink);
  detail::check_lipschitz_z(gen, problem.grid, probes, "f", need_h6 ? "H6" : "H1", sink);
  detail::check_noise_contraction(gen, problem.l, probes, sink);
  if (need_h5) detail::check_linear_growth(gen, problem.d, problem.grid, probes, sink);
  if (mode == AssumptionMode::sandwich_h2 && problem.bounding_pair) detail::check_bounding(problem, probes, sink);
  return report;
}

/// Same probes as `validate`, restricted to the left-Lipschitz and z-Lipschitz
/// bounds of a single generator.
inline ValidationReport spot_check_lipschitz(const GeneratorSpec& gen, const TimeGrid& grid, std::size_t d) {
  ValidationReport report;
  detail::ViolationSink sink(report);
  const auto probes = detail::make_probes(grid, d);
  detail::check_left_lipschitz(gen, grid, probes, gen.name, sink);
  detail::check_lipschitz_z(gen, grid, probes, gen.name, "H1", sink);
  return report;
}

} // namespace bdsde

#endif // BDSDE_PROBLEM_HPP
