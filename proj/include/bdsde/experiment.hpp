#ifndef BDSDE_EXPERIMENT_HPP
#define BDSDE_EXPERIMENT_HPP

// Scenario configs, the scenario catalog, and the artifacts a run writes.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bdsde/bdsde.hpp"

namespace bdsde {

inline constexpr const char* kCodeVersion = "bdsde-lab 0.1.0";
inline constexpr const char* kResultsHeader = "scenario,check,metric,value,threshold,pass";
inline constexpr const char* kPlotHeader = "series,t,mean,ci_lo,ci_hi";
inline constexpr const char* kDiagnosticsHeader =
    "series,iteration,delta,uniform_bound,monotone_violation_fraction,floor_violation_fraction,"
    "ceiling_violation_fraction,y0_mean";

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Shortest round-trip decimal form; locale independent.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

// ---------------------------------------------------------------------------
// Scenario catalog
// ---------------------------------------------------------------------------

struct ScenarioInfo {
  const char* name;
  const char* description;
};

inline constexpr ScenarioInfo kScenarios[] = {
    {"ode-oracle", "f = a*y + c0, g = 0, constant terminal; Y0 against the closed-form ODE"},
    {"martingale", "f = g = 0, xi = W_T; Y0 centered and Z = 1 at interior nodes"},
    {"backward-centering", "f = 0, g = s*y, xi = 1; mean Y0 = 1 (zero-mean backward integral)"},
    {"lemma22", "l*y + m|z| + phi and l|y| + m|z| + phi with xi >= 0; both solutions nonnegative"},
    {"step-minimal", "increasing penalized iteration for a discontinuous drift; ordering and envelopes"},
    {"upper-bound", "decreasing penalized iteration; reverse ordering and minimal <= upper bound"},
    {"sandwich", "iteration started from Y1 under bounding drifts f1 <= f <= f2; Y1 <= y_i <= y_i+1 <= Y2"},
    {"comparison", "minimal solutions with f1 >= f2 and xi1 >= xi2 on shared noise; Y2 <= Y1"},
    {"maximal-h6", "right-continuous drift; maximal-solution candidate via reflection"},
    {"negative-controls", "engineered violations that the order checks must reject"},
};

inline std::string list_scenarios() {
  std::ostringstream os;
  for (const auto& s : kScenarios) os << s.name << "  " << s.description << '\n';
  return os.str();
}

inline bool is_scenario(const std::string& name) {
  for (const auto& s : kScenarios)
    if (name == s.name) return true;
  return false;
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

/// Flat `key = value` scenario config. Every known key has a default; the
/// scenario picks its own defaults for the model keys.
struct ScenarioConfig {
  std::string scenario;
  std::uint64_t seed = 42;
  double T = 1.0;
  std::size_t n_steps = 100;
  std::size_t m_outer = 32;
  std::size_t n_inner = 2000;
  std::size_t d = 1;
  std::size_t l = 1;
  int degree = 3;
  int picard_inner = 3;
  std::string feature_map = "w";
  double tol_iter = 1e-3;
  int i_max = 25;
  double epsilon = kDefaultOrderEpsilon;
  double p = kDefaultOrderFraction;
  double epsilon_monotone = 0.01;
  bool antithetic = false;
  std::string generator = "zero";
  std::string terminal = "constant(1)";
  std::string g = "zero";
  std::optional<double> K{};
  std::string lower_generator = "zero";
  std::string upper_generator = "constant(1)";
  double a = 1.0;
  double c0 = 0.0;
  double xi0 = 1.0;
  double tolerance = 0.05;
  double f_shift = 0.5;
  double xi_shift = 0.1;
  double min_gap = 0.1;
  double lemma_l = 0.5;
  double lemma_m = 0.5;
  double phi = 1.0;
  std::string output_dir = "./out";

  /// Resolved values as strings, in key order (what the manifest records).
  std::map<std::string, std::string> resolved() const {
    std::map<std::string, std::string> m;
    m["scenario"] = scenario;
    m["seed"] = std::to_string(seed);
    m["T"] = format_number(T);
    m["n_steps"] = std::to_string(n_steps);
    m["m_outer"] = std::to_string(m_outer);
    m["n_inner"] = std::to_string(n_inner);
    m["d"] = std::to_string(d);
    m["l"] = std::to_string(l);
    m["degree"] = std::to_string(degree);
    m["picard_inner"] = std::to_string(picard_inner);
    m["feature_map"] = feature_map;
    m["tol_iter"] = format_number(tol_iter);
    m["I_max"] = std::to_string(i_max);
    m["epsilon"] = format_number(epsilon);
    m["p"] = format_number(p);
    m["epsilon_monotone"] = format_number(epsilon_monotone);
    m["antithetic"] = antithetic ? "true" : "false";
    m["generator"] = generator;
    m["terminal"] = terminal;
    m["g"] = g;
    m["K"] = K ? format_number(*K) : "default";
    m["lower_generator"] = lower_generator;
    m["upper_generator"] = upper_generator;
    m["a"] = format_number(a);
    m["c0"] = format_number(c0);
    m["xi0"] = format_number(xi0);
    m["tolerance"] = format_number(tolerance);
    m["f_shift"] = format_number(f_shift);
    m["xi_shift"] = format_number(xi_shift);
    m["min_gap"] = format_number(min_gap);
    m["lemma_l"] = format_number(lemma_l);
    m["lemma_m"] = format_number(lemma_m);
    m["phi"] = format_number(phi);
    m["output_dir"] = output_dir;
    return m;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a nonnegative integer, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

inline void scenario_defaults(ScenarioConfig& c) {
  const std::string& s = c.scenario;
  if (s == "ode-oracle") {
    c.n_steps = 200;
    c.m_outer = 4;
    c.n_inner = 200;
  } else if (s == "martingale") {
    c.n_inner = 10000;
    c.terminal = "w_terminal";
  } else if (s == "backward-centering") {
    c.m_outer = 256;
    c.n_inner = 100;
    c.g = "linear_y(0.3)";
    c.terminal = "constant(1)";
  } else if (s == "lemma22") {
    c.g = "linear_y(0.2)";
    c.terminal = "abs_w";
  } else if (s == "step-minimal" || s == "upper-bound" || s == "comparison") {
    c.generator = "step_plus_linear(1, 0)";
    c.g = "linear_y(0.3)";
    c.terminal = "abs_w";
  } else if (s == "sandwich") {
    c.generator = "step_threshold(1)";
    c.lower_generator = "zero";
    c.upper_generator = "constant(1)";
    c.g = "zero";
    c.terminal = "abs_w";
  } else if (s == "maximal-h6") {
    c.generator = "step_threshold_rc(1)";
    c.g = "linear_y(0.3)";
    c.terminal = "abs_w";
  } else if (s == "negative-controls") {
    c.generator = "step_plus_linear(1, 0)";
    c.g = "linear_y(0.2)";
    c.terminal = "abs_w";
    c.n_steps = 50;
    c.n_inner = 500;
    c.m_outer = 8;
  }
}

} // namespace detail

/// Parses the flat config text. Unknown or duplicated keys and malformed
/// values are rejected with a ConfigError naming the key.
inline ScenarioConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second) throw ConfigError("config key '" + key + "' given twice");
  }

  ScenarioConfig c;
  const auto sc = kv.find("scenario");
  if (sc == kv.end()) throw ConfigError("config is missing the 'scenario' key");
  c.scenario = sc->second;
  if (!is_scenario(c.scenario)) {
    std::string names;
    for (const auto& s : kScenarios) names += std::string(names.empty() ? "" : ", ") + s.name;
    throw ConfigError("unknown scenario '" + c.scenario + "'; valid scenarios: " + names);
  }
  detail::scenario_defaults(c);

  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto size_setter = [](std::size_t& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = detail::parse_u64(k, v); };
  };
  auto int_setter = [](int& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) {
      field = static_cast<int>(detail::parse_u64(k, v));
    };
  };
  auto real_setter = [](double& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = detail::parse_double(k, v); };
  };
  auto text_setter = [](std::string& field) -> Setter {
    return [&field](const std::string&, const std::string& v) { field = v; };
  };
  const std::map<std::string, Setter> setters = {
      {"scenario", [](const std::string&, const std::string&) {}},
      {"seed", [&c](const std::string& k, const std::string& v) { c.seed = detail::parse_u64(k, v); }},
      {"T", real_setter(c.T)},
      {"n_steps", size_setter(c.n_steps)},
      {"m_outer", size_setter(c.m_outer)},
      {"n_inner", size_setter(c.n_inner)},
      {"d", size_setter(c.d)},
      {"l", size_setter(c.l)},
      {"degree", int_setter(c.degree)},
      {"picard_inner", int_setter(c.picard_inner)},
      {"feature_map", text_setter(c.feature_map)},
      {"tol_iter", real_setter(c.tol_iter)},
      {"I_max", int_setter(c.i_max)},
      {"epsilon", real_setter(c.epsilon)},
      {"p", real_setter(c.p)},
      {"epsilon_monotone", real_setter(c.epsilon_monotone)},
      {"antithetic", [&c](const std::string& k, const std::string& v) { c.antithetic = detail::parse_bool(k, v); }},
      {"generator", text_setter(c.generator)},
      {"terminal", text_setter(c.terminal)},
      {"g", text_setter(c.g)},
      {"K", [&c](const std::string& k, const std::string& v) { c.K = detail::parse_double(k, v); }},
      {"lower_generator", text_setter(c.lower_generator)},
      {"upper_generator", text_setter(c.upper_generator)},
      {"a", real_setter(c.a)},
      {"c0", real_setter(c.c0)},
      {"xi0", real_setter(c.xi0)},
      {"tolerance", real_setter(c.tolerance)},
      {"f_shift", real_setter(c.f_shift)},
      {"xi_shift", real_setter(c.xi_shift)},
      {"min_gap", real_setter(c.min_gap)},
      {"lemma_l", real_setter(c.lemma_l)},
      {"lemma_m", real_setter(c.lemma_m)},
      {"phi", real_setter(c.phi)},
      {"output_dir", text_setter(c.output_dir)},
  };
  for (const auto& [k, v] : kv) {
    const auto it = setters.find(k);
    if (it == setters.end()) throw ConfigError("unknown config key '" + k + "'");
    it->second(k, v);
  }

  if (!(c.T > 0.0)) throw ConfigError("config key 'T': must be positive");
  if (c.n_steps < 1) throw ConfigError("config key 'n_steps': must be >= 1");
  if (c.m_outer < 1) throw ConfigError("config key 'm_outer': must be >= 1");
  if (c.n_inner < 2) throw ConfigError("config key 'n_inner': must be >= 2");
  if (c.d < 1 || c.l < 1) throw ConfigError("config keys 'd', 'l': must be >= 1");
  if (c.degree > kMaxBasisDegree) throw ConfigError("config key 'degree': must be <= 10");
  if (c.picard_inner < 1) throw ConfigError("config key 'picard_inner': must be >= 1");
  if (c.feature_map != "w" && c.feature_map != "w_and_anchor_y")
    throw ConfigError("config key 'feature_map': expected 'w' or 'w_and_anchor_y'");
  if (!(c.tol_iter > 0.0)) throw ConfigError("config key 'tol_iter': must be positive");
  if (c.i_max < 1) throw ConfigError("config key 'I_max': must be >= 1");
  if (!(c.epsilon > 0.0)) throw ConfigError("config key 'epsilon': must be positive");
  if (!(c.epsilon_monotone > 0.0)) throw ConfigError("config key 'epsilon_monotone': must be positive");
  if (!(c.p > 0.0 && c.p < 1.0)) throw ConfigError("config key 'p': must lie in (0, 1)");
  if (c.K && !(*c.K >= 0.0)) throw ConfigError("config key 'K': must be nonnegative");
  return c;
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// "name(1, 2.5)" or "name" -> (name, {params}).
inline std::pair<std::string, std::vector<double>> parse_call(const std::string& text) {
  const std::string s = detail::trim(text);
  const auto open = s.find('(');
  if (open == std::string::npos) return {s, {}};
  if (s.back() != ')') throw ConfigError("malformed identifier '" + s + "': missing ')'");
  std::pair<std::string, std::vector<double>> out{detail::trim(s.substr(0, open)), {}};
  const std::string inner = s.substr(open + 1, s.size() - open - 2);
  std::stringstream ps(inner);
  std::string item;
  while (std::getline(ps, item, ',')) {
    item = detail::trim(item);
    if (item.empty()) {
      if (inner.find_first_not_of(" \t") == std::string::npos) break;
      throw ConfigError("malformed identifier '" + s + "': empty parameter");
    }
    out.second.push_back(detail::parse_double(out.first, item));
  }
  return out;
}

inline GeneratorSpec resolve_generator(const std::string& text) {
  const auto [name, params] = parse_call(text);
  return builtin_generator(name, params);
}

inline NoiseCoefficient resolve_noise(const std::string& text) {
  const auto [name, params] = parse_call(text);
  return builtin_noise(name, params);
}

inline TerminalSpec resolve_terminal(const std::string& text) {
  const auto [name, params] = parse_call(text);
  return builtin_terminal(name, params);
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct CheckResult {
  std::string scenario;
  std::string check;
  std::string metric;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;

  friend bool operator==(const CheckResult&, const CheckResult&) = default;
};

struct RunManifest {
  std::map<std::string, std::string> config;
  std::string code_version = kCodeVersion;
  std::string rng_method;
  std::uint64_t seed = 0;
  double duration_seconds = 0.0;
  std::vector<CheckResult> checks;
  std::vector<std::string> notes;
  int exit_status = 0;

  friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

inline nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json j;
  j["config"] = m.config;
  j["code_version"] = m.code_version;
  j["rng_method"] = m.rng_method;
  j["seed"] = m.seed;
  j["duration_seconds"] = m.duration_seconds;
  j["checks"] = nlohmann::json::array();
  for (const auto& c : m.checks)
    j["checks"].push_back({{"scenario", c.scenario},
                           {"check", c.check},
                           {"metric", c.metric},
                           {"value", c.value},
                           {"threshold", c.threshold},
                           {"pass", c.pass}});
  j["notes"] = m.notes;
  j["exit_status"] = m.exit_status;
  return j;
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.config = j.at("config").get<std::map<std::string, std::string>>();
  m.code_version = j.at("code_version").get<std::string>();
  m.rng_method = j.at("rng_method").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.duration_seconds = j.at("duration_seconds").get<double>();
  for (const auto& c : j.at("checks"))
    m.checks.push_back({c.at("scenario").get<std::string>(), c.at("check").get<std::string>(),
                        c.at("metric").get<std::string>(), c.at("value").get<double>(),
                        c.at("threshold").get<double>(), c.at("pass").get<bool>()});
  m.notes = j.at("notes").get<std::vector<std::string>>();
  m.exit_status = j.at("exit_status").get<int>();
  return m;
}

// ---------------------------------------------------------------------------
// Plot data and diagnostics
// ---------------------------------------------------------------------------

struct PlotSeries {
  std::string name;
  std::vector<NodeStat> points;
};

inline std::vector<PlotSeries> plot_series(const IterationReport& report) {
  std::vector<PlotSeries> out;
  for (const auto& s : report.summaries) out.push_back({"iterate_" + std::to_string(s.index), s.profile});
  return out;
}

/// Y plus one series per Z component.
inline std::vector<PlotSeries> plot_series(const DiscreteSolution& sol, const std::string& prefix = "") {
  std::vector<PlotSeries> out;
  out.push_back({prefix + "Y", node_profile(sol)});
  std::vector<double> outer_means(sol.m_outer());
  std::vector<double> all;
  for (std::size_t j = 0; j < sol.d(); ++j) {
    PlotSeries s{prefix + "Z" + std::to_string(j), {}};
    for (std::size_t k = 0; k < sol.n_nodes(); ++k) {
      all.clear();
      for (std::size_t o = 0; o < sol.m_outer(); ++o) {
        double acc = 0.0;
        for (std::size_t i = 0; i < sol.n_inner(); ++i) acc += sol.z(o, i, k)[j];
        outer_means[o] = acc / static_cast<double>(sol.n_inner());
        if (sol.m_outer() < 2)
          for (std::size_t i = 0; i < sol.n_inner(); ++i) all.push_back(sol.z(o, i, k)[j]);
      }
      const Interval ci = sol.m_outer() >= 2 ? mean_ci(outer_means, 0.95) : mean_ci(all, 0.95);
      const double m = mean(outer_means);
      s.points.push_back({sol.grid()[k], m, std::min(ci.lo, m), std::max(ci.hi, m)});
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline void write_plot_csv(std::ostream& os, const std::vector<PlotSeries>& series) {
  os << kPlotHeader << '\n';
  for (const auto& s : series)
    for (const auto& p : s.points)
      os << s.name << ',' << format_number(p.t) << ',' << format_number(p.mean) << ',' << format_number(p.ci_lo)
         << ',' << format_number(p.ci_hi) << '\n';
}

inline void emit_plot_data(const std::vector<PlotSeries>& series, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write plot data to '" + path.string() + "'");
  write_plot_csv(out, series);
  if (!out) throw std::runtime_error("failed writing plot data to '" + path.string() + "'");
}

inline void emit_plot_data(const IterationReport& report, const std::filesystem::path& path) {
  emit_plot_data(plot_series(report), path);
}

inline void emit_plot_data(const DiscreteSolution& sol, const std::filesystem::path& path) {
  emit_plot_data(plot_series(sol), path);
}

struct DiagnosticsRow {
  std::string series;
  std::size_t iteration = 0;
  double delta = 0.0;
  double uniform_bound = 0.0;
  double monotone = 0.0;
  double floor = 0.0;
  double ceiling = 0.0;
  double y0 = 0.0;
};

inline std::vector<DiagnosticsRow> diagnostics_rows(const IterationReport& r, const std::string& series) {
  std::vector<DiagnosticsRow> rows;
  double bound = 0.0;
  for (std::size_t i = 0; i < r.deltas.size(); ++i) {
    bound = std::max({bound, r.bound_history[i], r.bound_history[i + 1]});
    rows.push_back({series, i + 1, r.deltas[i], bound, r.monotonicity[i].violation_fraction,
                    r.floor_checks[i].violation_fraction, r.ceiling_checks[i].violation_fraction,
                    r.summaries[i + 1].y0_mean});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Running a scenario
// ---------------------------------------------------------------------------

struct ScenarioOutcome {
  std::vector<CheckResult> checks;
  std::vector<PlotSeries> plot;
  std::vector<DiagnosticsRow> diagnostics;
  std::vector<std::string> notes;
  std::string rng_method;

  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

namespace detail {

struct ScenarioContext {
  const ScenarioConfig& cfg;
  ScenarioOutcome& out;

  TimeGrid grid() const { return TimeGrid(cfg.T, cfg.n_steps); }

  NoiseConfig noise() const {
    NoiseConfig n;
    n.seed = cfg.seed;
    n.m_outer = cfg.m_outer;
    n.n_inner = cfg.n_inner;
    n.d = cfg.d;
    n.l = cfg.l;
    return n;
  }

  BrownianBundle bundle() const {
    BrownianBundle b = generate(grid(), noise());
    if (cfg.antithetic) b = antithetic_extend(b);
    out.rng_method = b.rng_method();
    return b;
  }

  SolverConfig solver() const {
    SolverConfig s;
    s.basis.degree = cfg.degree;
    s.basis.feature_map = cfg.feature_map == "w" ? FeatureMap::w_value : FeatureMap::w_and_anchor_y;
    s.picard_inner = cfg.picard_inner;
    return s;
  }

  IterationConfig iteration() const {
    IterationConfig it;
    it.K = cfg.K;
    it.tol_iter = cfg.tol_iter;
    it.i_max = cfg.i_max;
    it.solver = solver();
    it.order_epsilon = cfg.epsilon_monotone;
    it.order_p = cfg.p;
    return it;
  }

  BdsdeProblem problem(GeneratorSpec f, const std::string& terminal) const {
    f = with_noise(std::move(f), resolve_noise(cfg.g));
    if (cfg.K) f.K = *cfg.K;
    return BdsdeProblem{grid(), cfg.d, cfg.l, std::move(f), resolve_terminal(terminal), std::nullopt};
  }

  // value <= threshold
  void at_most(const std::string& check, const std::string& metric, double value, double threshold) {
    out.checks.push_back({cfg.scenario, check, metric, value, threshold, value <= threshold});
  }
  // value >= threshold
  void at_least(const std::string& check, const std::string& metric, double value, double threshold) {
    out.checks.push_back({cfg.scenario, check, metric, value, threshold, value >= threshold});
  }
  void order(const std::string& check, const OrderReport& r) {
    out.checks.push_back({cfg.scenario, check, "violation_fraction", r.violation_fraction, r.threshold, r.pass});
  }
  void flag(const std::string& check, bool ok) {
    out.checks.push_back({cfg.scenario, check, "flag", ok ? 1.0 : 0.0, 1.0, ok});
  }

  // Worst of a list of order reports, as one check.
  void order_all(const std::string& check, const std::vector<OrderReport>& reports, double p) {
    double worst = 0.0;
    bool ok = true;
    for (const auto& r : reports) {
      worst = std::max(worst, r.violation_fraction);
      ok = ok && r.pass;
    }
    out.checks.push_back({cfg.scenario, check, "max_violation_fraction", worst, p, ok});
  }

  void iteration_checks(const IterationReport& r, const std::string& prefix) {
    flag(prefix + "converged", r.converged);
    order_all(prefix + "monotone_iterates", r.monotonicity, cfg.p);
    order_all(prefix + "floor_order", r.floor_checks, cfg.p);
    order_all(prefix + "ceiling_order", r.ceiling_checks, cfg.p);
    at_most(prefix + "uniform_bound_finite", "uniform_bound", r.uniform_bound,
            std::numeric_limits<double>::max());
    const auto rows = diagnostics_rows(r, prefix.empty() ? cfg.scenario : prefix.substr(0, prefix.size() - 1));
    out.diagnostics.insert(out.diagnostics.end(), rows.begin(), rows.end());
  }
};

inline void run_ode_oracle(ScenarioContext& ctx) {
  const auto& c = ctx.cfg;
  const auto bundle = ctx.bundle();
  const auto p = ctx.problem(builtin_generator("linear", {c.a, c.c0}), "constant(" + format_number(c.xi0) + ")");
  const auto sol = backward_sweep(p, bundle, ctx.solver());
  const auto ref = oracle_ode(c.a, c.c0, c.xi0, ctx.grid());
  const double y0 = mean(initial_values(sol));
  ctx.at_most("y0_vs_closed_form", "abs_error", std::abs(y0 - ref.front()), c.tolerance);
  ctx.out.plot = plot_series(sol);
  PlotSeries oracle{"oracle", {}};
  for (std::size_t k = 0; k < ref.size(); ++k) oracle.points.push_back({ctx.grid()[k], ref[k], ref[k], ref[k]});
  ctx.out.plot.push_back(std::move(oracle));
}

inline void run_martingale(ScenarioContext& ctx) {
  const auto bundle = ctx.bundle();
  const auto p = ctx.problem(builtin_generator("zero"), ctx.cfg.terminal);
  const auto sol = backward_sweep(p, bundle, ctx.solver());
  const auto y0 = initial_values(sol);
  const double se = bundle.m_outer() >= 2 ? standard_error(y0) : 0.0;
  ctx.at_most("y0_centered", "abs_mean_y0_over_se", se > 0 ? std::abs(mean(y0)) / se : std::abs(mean(y0)), 4.0);
  double zsum = 0.0;
  std::size_t zcount = 0;
  for (std::size_t o = 0; o < sol.m_outer(); ++o)
    for (std::size_t k = 1; k + 1 < sol.n_nodes(); ++k)
      for (std::size_t i = 0; i < sol.n_inner(); ++i, ++zcount) zsum += sol.z(o, i, k)[0];
  ctx.at_most("z_interior_is_one", "abs_mean_z_minus_1", std::abs(zsum / static_cast<double>(zcount) - 1.0), 0.1);
  if (bundle.d() == 1) {
    const auto ref = oracle_martingale(bundle);
    double mse = 0.0;
    for (std::size_t q = 0; q < sol.n_points(); ++q) {
      const double e = sol.y_values()[q] - ref.y_values()[q];
      mse += e * e;
    }
    ctx.at_most("y_matches_w_path", "mse", mse / static_cast<double>(sol.n_points()), 0.01);
  }
  ctx.out.plot = plot_series(sol);
}

inline void run_backward_centering(ScenarioContext& ctx) {
  const auto bundle = ctx.bundle();
  const auto p = ctx.problem(builtin_generator("zero"), ctx.cfg.terminal);
  const auto sol = backward_sweep(p, bundle, ctx.solver());
  const auto xi = terminal_values(p, bundle);
  const auto y0 = initial_values(sol);
  const double se = standard_error(y0);
  ctx.at_most("y0_mean_equals_xi_mean", "abs_diff_over_se", std::abs(mean(y0) - mean(xi)) / se, 4.0);
  ctx.out.plot = plot_series(sol);
}

inline Lemma22Spec lemma22_spec(const ScenarioContext& ctx, const std::string& terminal) {
  Lemma22Spec s;
  s.l = ctx.cfg.lemma_l;
  s.m = ctx.cfg.lemma_m;
  const double phi = ctx.cfg.phi;
  s.phi = [phi](double, double) { return phi; };
  s.terminal = resolve_terminal(terminal);
  s.g = resolve_noise(ctx.cfg.g);
  return s;
}

inline void run_lemma22(ScenarioContext& ctx) {
  const auto bundle = ctx.bundle();
  const auto r = lemma22_run(lemma22_spec(ctx, ctx.cfg.terminal), bundle, ctx.solver(), ctx.cfg.epsilon, ctx.cfg.p);
  ctx.flag("preconditions", r.preconditions_ok);
  ctx.order("f1_solution_nonnegative", r.f1_report);
  ctx.order("f2_solution_nonnegative", r.f2_report);
}

inline void run_step_minimal(ScenarioContext& ctx) {
  const auto bundle = ctx.bundle();
  const auto p = ctx.problem(resolve_generator(ctx.cfg.generator), ctx.cfg.terminal);
  const auto r = run_minimal(p, bundle, ctx.iteration());
  ctx.iteration_checks(r, "");
  ctx.out.plot = plot_series(r);
  auto env = plot_series(*r.floor, "lower_envelope_");
  ctx.out.plot.push_back(env.front());
  env = plot_series(*r.ceiling, "upper_envelope_");
  ctx.out.plot.push_back(env.front());
}

inline void run_upper_bound_scenario(ScenarioContext& ctx) {
  const auto bundle = ctx.bundle();
  const auto p = ctx.problem(resolve_generator(ctx.cfg.generator), ctx.cfg.terminal);
  const auto lo = run_minimal(p, bundle, ctx.iteration());
  const auto up = run_upper_bound(p, bundle, ctx.iteration());
  ctx.iteration_checks(up, "upper_");
  ctx.flag("minimal_converged", lo.converged);
  ctx.order("minimal_below_upper_bound", check_order(lo.final(), up.final(), ctx.cfg.epsilon, ctx.cfg.p));
  ctx.out.plot = plot_series(up);
  ctx.out.plot.push_back(plot_series(lo.final(), "minimal_").front());
}

inline void run_sandwich_scenario(ScenarioContext& ctx) {
  const auto bundle = ctx.bundle();
  auto p = ctx.problem(resolve_generator(ctx.cfg.generator), ctx.cfg.terminal);
  auto lower = with_noise(resolve_generator(ctx.cfg.lower_generator), resolve_noise(ctx.cfg.g));
  auto upper = with_noise(resolve_generator(ctx.cfg.upper_generator), resolve_noise(ctx.cfg.g));
  p.bounding_pair = BoundingPair{std::move(lower), std::move(upper)};
  auto it = ctx.iteration();
  it.order_epsilon = ctx.cfg.epsilon;
  const auto r = run_sandwich(p, bundle, it);
  ctx.order("y1_below_y2", *r.bound_order);
  ctx.iteration_checks(r, "");
  ctx.out.plot = plot_series(r);
  ctx.out.plot.push_back(plot_series(*r.floor, "Y1_").front());
  ctx.out.plot.push_back(plot_series(*r.ceiling, "Y2_").front());
}

inline void run_comparison_scenario(ScenarioContext& ctx) {
  const auto& c = ctx.cfg;
  const auto second = ctx.problem(resolve_generator(c.generator), c.terminal);
  auto first = second;
  first.generator = shifted(second.generator, c.f_shift);
  first.terminal = shifted(second.terminal, c.xi_shift);
  NoiseConfig nc = ctx.noise();
  ctx.out.rng_method = NormalStream::method_name();
  const auto v = comparison_experiment(first, second, nc, ctx.iteration(), c.epsilon, c.p);
  ctx.flag("preconditions", v.preconditions_ok);
  ctx.out.notes.push_back(std::string("preconditions_ok=") + (v.preconditions_ok ? "true" : "false"));
  for (const auto& f : v.precondition_failures) ctx.out.notes.push_back("precondition: " + f);
  if (v.order_report) {
    ctx.order("second_below_first", *v.order_report);
    ctx.at_least("mean_gap", "mean_gap", v.order_report->mean_gap, c.min_gap);
    ctx.flag("both_converged", v.converged_first && v.converged_second);
    ctx.out.notes.push_back(std::string("verdict=") + (v.confirmed() ? "confirmed" : "not confirmed"));
  }
}

inline void run_maximal_scenario(ScenarioContext& ctx) {
  const auto bundle = ctx.bundle();
  const auto p = ctx.problem(resolve_generator(ctx.cfg.generator), ctx.cfg.terminal);
  const auto r = run_maximal_h6(p, bundle, ctx.iteration());
  ctx.iteration_checks(r, "");
  ctx.out.plot = plot_series(r);
}

// Each control must be rejected by the check it targets.
inline void run_negative_controls(ScenarioContext& ctx) {
  const auto& c = ctx.cfg;
  const auto bundle = ctx.bundle();
  const auto neg = lemma22_run(lemma22_spec(ctx, "constant(-1)"), bundle, ctx.solver(), c.epsilon, c.p);
  ctx.flag("negative_terminal_rejected", !neg.f1_report.pass && !neg.f2_report.pass && !neg.preconditions_ok);

  const auto second = ctx.problem(resolve_generator(c.generator), c.terminal);
  auto first = second;
  first.terminal = shifted(second.terminal, -1.0);
  const auto v = comparison_experiment(first, second, ctx.noise(), ctx.iteration(), c.epsilon, c.p);
  ctx.flag("swapped_terminal_rejected", !v.preconditions_ok);

  const auto lo = lower_envelope(second, bundle, ctx.iteration());
  const auto up = upper_envelope(second, bundle, ctx.iteration());
  ctx.flag("reversed_envelopes_rejected", !check_order(up, lo, c.epsilon, c.p).pass);
}

} // namespace detail

inline ScenarioOutcome run_scenario(const ScenarioConfig& cfg) {
  ScenarioOutcome out;
  out.rng_method = NormalStream::method_name();
  detail::ScenarioContext ctx{cfg, out};
  const std::string& s = cfg.scenario;
  if (s == "ode-oracle") detail::run_ode_oracle(ctx);
  else if (s == "martingale") detail::run_martingale(ctx);
  else if (s == "backward-centering") detail::run_backward_centering(ctx);
  else if (s == "lemma22") detail::run_lemma22(ctx);
  else if (s == "step-minimal") detail::run_step_minimal(ctx);
  else if (s == "upper-bound") detail::run_upper_bound_scenario(ctx);
  else if (s == "sandwich") detail::run_sandwich_scenario(ctx);
  else if (s == "comparison") detail::run_comparison_scenario(ctx);
  else if (s == "maximal-h6") detail::run_maximal_scenario(ctx);
  else if (s == "negative-controls") detail::run_negative_controls(ctx);
  else throw ConfigError("unknown scenario '" + s + "'");
  return out;
}

inline void write_results_csv(std::ostream& os, const std::vector<CheckResult>& checks) {
  os << kResultsHeader << '\n';
  for (const auto& c : checks)
    os << c.scenario << ',' << c.check << ',' << c.metric << ',' << format_number(c.value) << ','
       << format_number(c.threshold) << ',' << (c.pass ? "true" : "false") << '\n';
}

inline void write_diagnostics_csv(std::ostream& os, const std::vector<DiagnosticsRow>& rows) {
  os << kDiagnosticsHeader << '\n';
  for (const auto& r : rows)
    os << r.series << ',' << r.iteration << ',' << format_number(r.delta) << ',' << format_number(r.uniform_bound)
       << ',' << format_number(r.monotone) << ',' << format_number(r.floor) << ',' << format_number(r.ceiling) << ','
       << format_number(r.y0) << '\n';
}

struct RunOptions {
  std::filesystem::path config_path;
  std::optional<std::filesystem::path> out_dir{};
  std::optional<std::uint64_t> seed{};
  bool quiet = false;
};

inline constexpr int kExitPass = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitCheckFailed = 2;

/// Loads the config, runs the scenario, writes manifest.json, results.csv,
/// diagnostics.csv and plot.csv. Returns 0 when every check passed, 2 when
/// one failed, 1 on configuration or numerical errors.
inline int run(const RunOptions& opts, std::ostream& log, std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  ScenarioConfig cfg;
  try {
    cfg = load_config(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.out_dir) cfg.output_dir = opts.out_dir->string();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }

  RunManifest manifest;
  manifest.seed = cfg.seed;
  ScenarioOutcome outcome;
  try {
    outcome = run_scenario(cfg);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    manifest.notes.push_back(std::string("error: ") + e.what());
    manifest.exit_status = kExitError;
  }
  if (manifest.exit_status == 0) manifest.exit_status = outcome.all_pass() ? kExitPass : kExitCheckFailed;

  manifest.config = cfg.resolved();
  manifest.rng_method = outcome.rng_method.empty() ? NormalStream::method_name() : outcome.rng_method;
  manifest.checks = outcome.checks;
  manifest.notes.insert(manifest.notes.end(), outcome.notes.begin(), outcome.notes.end());
  manifest.duration_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  try {
    const std::filesystem::path dir = cfg.output_dir;
    std::filesystem::create_directories(dir);
    {
      std::ofstream os(dir / "results.csv", std::ios::binary);
      write_results_csv(os, outcome.checks);
      if (!os) throw std::runtime_error("cannot write " + (dir / "results.csv").string());
    }
    {
      std::ofstream os(dir / "diagnostics.csv", std::ios::binary);
      write_diagnostics_csv(os, outcome.diagnostics);
      if (!os) throw std::runtime_error("cannot write " + (dir / "diagnostics.csv").string());
    }
    emit_plot_data(outcome.plot, dir / "plot.csv");
    std::ofstream os(dir / "manifest.json", std::ios::binary);
    os << to_json(manifest).dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }

  if (!opts.quiet) {
    for (const auto& c : outcome.checks)
      log << (c.pass ? "PASS " : "FAIL ") << c.scenario << '/' << c.check << "  " << c.metric << '='
          << format_number(c.value) << " threshold=" << format_number(c.threshold) << '\n';
    log << "artifacts in " << cfg.output_dir << '\n';
  }
  return manifest.exit_status;
}

} // namespace bdsde

#endif // BDSDE_EXPERIMENT_HPP
