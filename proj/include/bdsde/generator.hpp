#ifndef BDSDE_GENERATOR_HPP
#define BDSDE_GENERATOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bdsde {

/// Where a generator is being evaluated. Builtin generators only look at `t`;
/// generators anchored on a previous iterate read the sample indices, and
/// generators with a state-dependent source term read `w` (W at the node).
struct Site {
  double t = 0.0;
  std::size_t node = 0;
  std::size_t outer = 0;
  std::size_t inner = 0;
  std::span<const double> w{};
};

using DriftFn = std::function<double(const Site&, double y, std::span<const double> z)>;
/// Writes the l components of g(t, y, z) into `out`.
using NoiseCoefficientFn =
    std::function<void(double t, double y, std::span<const double> z, std::span<double> out)>;

struct GeneratorFlags {
  bool f_left_continuous = false;  // H1 (y part)
  bool f_left_lipschitz = false;   // H3
  bool f_lipschitz_z = false;      // H1/H6 (z part)
  bool f_linear_growth_h5 = false; // H5
  bool f_right_continuous_h6 = false;
};

/// Drift f and backward coefficient g together with their regularity constants.
struct GeneratorSpec {
  std::string name;
  DriftFn f;
  NoiseCoefficientFn g;
  double K = 0.0;     // left-Lipschitz constant in y, Lipschitz constant in z
  double c = 0.0;     // g: Lipschitz constant in y (squared form)
  double alpha = 0.0; // g: contraction constant in z, must stay below 1
  GeneratorFlags flags;
  std::string g_name = "zero";

  double drift(const Site& site, double y, std::span<const double> z) const { return f(site, y, z); }

  void noise(double t, double y, std::span<const double> z, std::span<double> out) const {
    if (g) {
      g(t, y, z, out);
    } else {
      std::fill(out.begin(), out.end(), 0.0);
    }
  }
};

inline double euclidean_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return std::sqrt(s);
}

namespace detail {

inline void require_params(const std::string& name, std::span<const double> params, std::size_t n) {
  if (params.size() != n) {
    std::ostringstream os;
    os << "generator '" << name << "' expects " << n << " parameter(s), got " << params.size();
    throw std::invalid_argument(os.str());
  }
}

inline std::string describe(const std::string& name, std::span<const double> params) {
  std::ostringstream os;
  os.precision(17);
  os << name << '(';
  for (std::size_t i = 0; i < params.size(); ++i) os << (i ? "," : "") << params[i];
  os << ')';
  return os.str();
}

inline GeneratorFlags lipschitz_flags() { return {true, true, true, true, true}; }

// -v without touching the heap for the usual small dimensions.
class NegatedVector {
public:
  explicit NegatedVector(std::span<const double> v) : size_(v.size()) {
    if (size_ > kInline) heap_.resize(size_);
    double* dst = size_ > kInline ? heap_.data() : inline_;
    for (std::size_t j = 0; j < size_; ++j) dst[j] = -v[j];
  }
  std::span<const double> view() const { return {size_ > kInline ? heap_.data() : inline_, size_}; }

private:
  static constexpr std::size_t kInline = 8;
  double inline_[kInline]{};
  std::vector<double> heap_;
  std::size_t size_;
};

} // namespace detail

inline NoiseCoefficientFn zero_noise() {
  return [](double, double, std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
  };
}

/// Catalog of drifts. Every entry comes with g = 0; attach a backward
/// coefficient with `with_noise`.
///
///   zero                    f = 0
///   linear(a, c0)           f = a*y + c0
///   step_threshold(h)       f = 1{y > h}           (left-continuous)
///   step_threshold_rc(h)    f = 1{y >= h}          (right-continuous)
///   step_plus_linear(h, a)  f = 1{y > h} + a*y
///   lemma22_f1(l, m)        f = l*y + m*|z|
///   lemma22_f2(l, m)        f = l*|y| + m*|z|
///   constant(c0)            f = c0
inline GeneratorSpec builtin_generator(const std::string& name, std::span<const double> params) {
  GeneratorSpec spec;
  spec.name = detail::describe(name, params);
  spec.g = zero_noise();

  if (name == "zero") {
    detail::require_params(name, params, 0);
    spec.f = [](const Site&, double, std::span<const double>) { return 0.0; };
    spec.flags = detail::lipschitz_flags();
  } else if (name == "linear") {
    detail::require_params(name, params, 2);
    const double a = params[0], c0 = params[1];
    spec.f = [a, c0](const Site&, double y, std::span<const double>) { return a * y + c0; };
    spec.K = std::abs(a);
    spec.flags = detail::lipschitz_flags();
  } else if (name == "constant") {
    detail::require_params(name, params, 1);
    const double c0 = params[0];
    spec.f = [c0](const Site&, double, std::span<const double>) { return c0; };
    spec.flags = detail::lipschitz_flags();
  } else if (name == "step_threshold" || name == "step_threshold_rc") {
    detail::require_params(name, params, 1);
    const double h = params[0];
    const bool right = name == "step_threshold_rc";
    if (right) {
      spec.f = [h](const Site&, double y, std::span<const double>) { return y >= h ? 1.0 : 0.0; };
    } else {
      spec.f = [h](const Site&, double y, std::span<const double>) { return y > h ? 1.0 : 0.0; };
    }
    // Nondecreasing, so left-Lipschitz with any K >= 0. Linear growth needs K >= 1/h.
    spec.K = h > 0.0 ? 1.0 / h : 1.0;
    spec.flags = {!right, true, true, right || h != 0.0, right};
  } else if (name == "step_plus_linear") {
    detail::require_params(name, params, 2);
    const double h = params[0], a = params[1];
    spec.f = [h, a](const Site&, double y, std::span<const double>) { return (y > h ? 1.0 : 0.0) + a * y; };
    spec.K = std::abs(a) + (h > 0.0 ? 1.0 / h : 0.0);
    if (spec.K == 0.0) spec.K = 1.0;
    spec.flags = {true, true, true, h != 0.0, false};
  } else if (name == "lemma22_f1" || name == "lemma22_f2") {
    detail::require_params(name, params, 2);
    const double l = params[0], m = params[1];
    if (name == "lemma22_f1") {
      spec.f = [l, m](const Site&, double y, std::span<const double> z) { return l * y + m * euclidean_norm(z); };
    } else {
      spec.f = [l, m](const Site&, double y, std::span<const double> z) {
        return l * std::abs(y) + m * euclidean_norm(z);
      };
    }
    spec.K = std::max(std::abs(l), std::abs(m));
    spec.flags = detail::lipschitz_flags();
  } else {
    throw std::invalid_argument("unknown generator '" + name +
                                "'; valid: zero, linear, constant, step_threshold, step_threshold_rc, "
                                "step_plus_linear, lemma22_f1, lemma22_f2");
  }
  return spec;
}

inline GeneratorSpec builtin_generator(const std::string& name, std::initializer_list<double> params = {}) {
  return builtin_generator(name, std::span<const double>(params.begin(), params.size()));
}

struct NoiseCoefficient {
  std::string name;
  NoiseCoefficientFn g;
  double c = 0.0;
  double alpha = 0.0;
};

/// Catalog of backward coefficients g (only the first of the l components is nonzero):
///   zero            g = 0
///   linear_y(s)     g = s*y
///   linear_yz(s, b) g = s*y + b*z_0
///   affine_y(s, b)  g = s*y + b
inline NoiseCoefficient builtin_noise(const std::string& name, std::span<const double> params) {
  NoiseCoefficient out;
  out.name = detail::describe(name, params);
  if (name == "zero") {
    detail::require_params(name, params, 0);
    out.g = zero_noise();
  } else if (name == "linear_y" || name == "affine_y") {
    detail::require_params(name, params, name == "linear_y" ? 1 : 2);
    const double s = params[0];
    const double b = name == "affine_y" ? params[1] : 0.0;
    out.g = [s, b](double, double y, std::span<const double>, std::span<double> r) {
      std::fill(r.begin(), r.end(), 0.0);
      if (!r.empty()) r[0] = s * y + b;
    };
    out.c = s * s;
  } else if (name == "linear_yz") {
    detail::require_params(name, params, 2);
    const double s = params[0], b = params[1];
    out.g = [s, b](double, double y, std::span<const double> z, std::span<double> r) {
      std::fill(r.begin(), r.end(), 0.0);
      if (!r.empty()) r[0] = s * y + (z.empty() ? 0.0 : b * z[0]);
    };
    // (s dy + b dz)^2 <= 2 s^2 dy^2 + 2 b^2 dz^2
    out.c = 2.0 * s * s;
    out.alpha = 2.0 * b * b;
  } else {
    throw std::invalid_argument("unknown backward coefficient '" + name +
                                "'; valid: zero, linear_y, linear_yz, affine_y");
  }
  return out;
}

inline NoiseCoefficient builtin_noise(const std::string& name, std::initializer_list<double> params = {}) {
  return builtin_noise(name, std::span<const double>(params.begin(), params.size()));
}

inline GeneratorSpec with_noise(GeneratorSpec spec, const NoiseCoefficient& g) {
  spec.g = g.g;
  spec.c = g.c;
  spec.alpha = g.alpha;
  spec.g_name = g.name;
  return spec;
}

inline GeneratorSpec with_lipschitz_constant(GeneratorSpec spec, double K) {
  spec.K = K;
  return spec;
}

/// f + shift, same g and constants.
inline GeneratorSpec shifted(GeneratorSpec spec, double shift) {
  auto base = spec.f;
  spec.f = [base, shift](const Site& s, double y, std::span<const double> z) { return base(s, y, z) + shift; };
  std::ostringstream os;
  os.precision(17);
  os << spec.name << (shift < 0 ? "" : "+") << shift;
  spec.name = os.str();
  return spec;
}

/// Mirror image under y -> -y: f~(t,y,z) = -f(t,-y,-z), g~(t,y,z) = -g(t,-y,-z).
/// Left- and right-continuity swap; the other constants are preserved.
inline GeneratorSpec reflected(const GeneratorSpec& spec) {
  GeneratorSpec out = spec;
  auto f = spec.f;
  out.f = [f](const Site& s, double y, std::span<const double> z) {
    detail::NegatedVector nz(z);
    return -f(s, -y, nz.view());
  };
  auto g = spec.g;
  if (g) {
    out.g = [g](double t, double y, std::span<const double> z, std::span<double> r) {
      detail::NegatedVector nz(z);
      g(t, -y, nz.view(), r);
      for (double& v : r) v = -v;
    };
  }
  std::swap(out.flags.f_left_continuous, out.flags.f_right_continuous_h6);
  out.name = "reflected(" + spec.name + ")";
  return out;
}

} // namespace bdsde

#endif // BDSDE_GENERATOR_HPP
