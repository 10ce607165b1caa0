#ifndef BDSDE_REGRESSION_HPP
#define BDSDE_REGRESSION_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bdsde {

enum class FeatureMap {
  w_value,          // W at the node
  w_and_anchor_y,   // (W at the node, previous iterate's Y at the node) when an anchor exists
};

struct BasisSpec {
  int degree = 3;
  FeatureMap feature_map = FeatureMap::w_value;
  // only polynomial family
};

inline constexpr int kMaxBasisDegree = 10;
inline constexpr double kRidgeConditionThreshold = 1e12;
inline constexpr double kRidgeScale = 1e-8;

inline void check(const BasisSpec& b) {
  if (b.degree < 0 || b.degree > kMaxBasisDegree)
    throw std::invalid_argument("BasisSpec: degree must be in [0, " + std::to_string(kMaxBasisDegree) + "], got " +
                                std::to_string(b.degree));
}

/// Exponent tuples of all monomials of total degree <= `degree` in
/// `n_features` variables, ordered by total degree, then lexicographically
/// with the first variable's exponent descending. For one feature: 1, x, x^2, ...
inline std::vector<std::vector<int>> monomial_exponents(std::size_t n_features, int degree) {
  std::vector<std::vector<int>> out;
  std::vector<int> e(n_features, 0);
  for (int total = 0; total <= degree; ++total) {
    // enumerate compositions of `total` into n_features parts
    auto rec = [&](auto&& self, std::size_t pos, int left) -> void {
      if (pos + 1 == n_features) {
        e[pos] = left;
        out.push_back(e);
        return;
      }
      for (int v = left; v >= 0; --v) {
        e[pos] = v;
        self(self, pos + 1, left - v);
      }
    };
    if (n_features == 0) {
      if (total == 0) out.emplace_back();
      continue;
    }
    rec(rec, 0, total);
  }
  return out;
}

inline std::size_t basis_size(std::size_t n_features, const BasisSpec& basis) {
  return monomial_exponents(n_features, basis.degree).size();
}

/// Raw polynomial design: one row per sample (rows of `features`), one column per monomial.
inline Eigen::MatrixXd design_matrix(const Eigen::Ref<const Eigen::MatrixXd>& features, const BasisSpec& basis) {
  check(basis);
  if (features.rows() == 0) throw std::invalid_argument("design_matrix: empty sample set");
  const auto exps = monomial_exponents(static_cast<std::size_t>(features.cols()), basis.degree);
  Eigen::MatrixXd X(features.rows(), static_cast<Eigen::Index>(exps.size()));
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    for (std::size_t c = 0; c < exps.size(); ++c) {
      double v = 1.0;
      for (std::size_t j = 0; j < exps[c].size(); ++j)
        for (int p = 0; p < exps[c][j]; ++p) v *= features(i, static_cast<Eigen::Index>(j));
      X(i, static_cast<Eigen::Index>(c)) = v;
    }
  return X;
}

inline Eigen::MatrixXd design_matrix(const std::vector<double>& scalar_features, const BasisSpec& basis) {
  return design_matrix(Eigen::Map<const Eigen::MatrixXd>(scalar_features.data(),
                                                         static_cast<Eigen::Index>(scalar_features.size()), 1),
                       basis);
}

/// Least-squares fit on the polynomial basis. Coefficients refer to the basis
/// in standardized features (x - mean) / scale, which spans the same space as
/// the raw design. Features with no spread are inactive: their scale is 0 and
/// every monomial touching them gets a zero coefficient.
struct RegressionFit {
  Eigen::VectorXd coefficients;
  BasisSpec basis;
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_scale;
  double condition_diagnostic = 0.0;
  bool ridge_used = false;
};

namespace detail {

struct StandardizedBasis {
  std::vector<std::vector<int>> exponents; // full basis
  std::vector<std::size_t> active;         // indices into `exponents` used by the solve
};

inline StandardizedBasis standardized_basis(std::size_t n_features, const BasisSpec& basis,
                                            const Eigen::VectorXd& scale) {
  StandardizedBasis sb{monomial_exponents(n_features, basis.degree), {}};
  for (std::size_t c = 0; c < sb.exponents.size(); ++c) {
    bool ok = true;
    for (std::size_t j = 0; j < n_features; ++j)
      if (sb.exponents[c][j] > 0 && scale(static_cast<Eigen::Index>(j)) == 0.0) ok = false;
    if (ok) sb.active.push_back(c);
  }
  return sb;
}

inline void standardized_design(const Eigen::Ref<const Eigen::MatrixXd>& features, const Eigen::VectorXd& mean,
                                const Eigen::VectorXd& scale, const StandardizedBasis& sb, Eigen::MatrixXd& X) {
  const Eigen::Index n = features.rows();
  const auto p = static_cast<std::size_t>(features.cols());
  X.resize(n, static_cast<Eigen::Index>(sb.active.size()));
  std::vector<double> x(p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      x[j] = scale(jj) == 0.0 ? 0.0 : (features(i, jj) - mean(jj)) / scale(jj);
    }
    for (std::size_t a = 0; a < sb.active.size(); ++a) {
      const auto& e = sb.exponents[sb.active[a]];
      double v = 1.0;
      for (std::size_t j = 0; j < p; ++j)
        for (int q = 0; q < e[j]; ++q) v *= x[j];
      X(i, static_cast<Eigen::Index>(a)) = v;
    }
  }
}

} // namespace detail

/// Factorizes the design of one sample cloud once, then projects any number
/// of target vectors onto the basis span.
class LeastSquaresProjector {
public:
  LeastSquaresProjector(const Eigen::Ref<const Eigen::MatrixXd>& features, BasisSpec basis) : basis_(basis) {
    check(basis_);
    const Eigen::Index n = features.rows();
    const Eigen::Index p = features.cols();
    if (n == 0) throw std::invalid_argument("regression: empty sample set");
    n_features_ = static_cast<std::size_t>(p);
    n_basis_ = basis_size(n_features_, basis_);
    if (static_cast<std::size_t>(n) < n_basis_)
      throw std::invalid_argument("regression: " + std::to_string(n) + " samples for " + std::to_string(n_basis_) +
                                  " basis functions");

    mean_ = features.colwise().mean().transpose();
    scale_.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      const double var = (features.col(j).array() - mean_(j)).square().mean();
      const double s = std::sqrt(var);
      scale_(j) = s > 1e-12 * (1.0 + std::abs(mean_(j))) ? s : 0.0;
    }
    sb_ = detail::standardized_basis(n_features_, basis_, scale_);
    detail::standardized_design(features, mean_, scale_, sb_, X_);

    qr_.compute(X_);
    const auto diag = qr_.matrixQR().diagonal().cwiseAbs();
    const double rmax = diag.maxCoeff();
    const double rmin = diag.minCoeff();
    condition_ = rmin > 0.0 ? (rmax / rmin) * (rmax / rmin) : std::numeric_limits<double>::infinity();
    if (!(condition_ <= kRidgeConditionThreshold)) {
      ridge_ = true;
      const Eigen::Index m = X_.cols();
      const double trace = X_.colwise().squaredNorm().sum();
      const double lambda = kRidgeScale * trace / static_cast<double>(m);
      Eigen::MatrixXd aug(n + m, m);
      aug.topRows(n) = X_;
      aug.bottomRows(m) = std::sqrt(lambda) * Eigen::MatrixXd::Identity(m, m);
      qr_.compute(aug);
    }
  }

  std::size_t n_samples() const noexcept { return static_cast<std::size_t>(X_.rows()); }
  bool ridge_used() const noexcept { return ridge_; }
  double condition_diagnostic() const noexcept { return condition_; }

  RegressionFit fit(const Eigen::Ref<const Eigen::VectorXd>& targets) const {
    RegressionFit f;
    f.basis = basis_;
    f.feature_mean = mean_;
    f.feature_scale = scale_;
    f.condition_diagnostic = condition_;
    f.ridge_used = ridge_;
    f.coefficients = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_basis_));
    const Eigen::VectorXd active = solve(targets);
    for (std::size_t a = 0; a < sb_.active.size(); ++a)
      f.coefficients(static_cast<Eigen::Index>(sb_.active[a])) = active(static_cast<Eigen::Index>(a));
    return f;
  }

  /// Fitted values of the projection of `targets` on the basis.
  void project(const Eigen::Ref<const Eigen::VectorXd>& targets, Eigen::Ref<Eigen::VectorXd> fitted) const {
    fitted.noalias() = X_ * solve(targets);
  }

  Eigen::VectorXd project(const Eigen::Ref<const Eigen::VectorXd>& targets) const {
    Eigen::VectorXd out(X_.rows());
    project(targets, out);
    return out;
  }

private:
  Eigen::VectorXd solve(const Eigen::Ref<const Eigen::VectorXd>& targets) const {
    if (targets.size() != X_.rows())
      throw std::invalid_argument("regression: " + std::to_string(targets.size()) + " targets for " +
                                  std::to_string(X_.rows()) + " samples");
    if (!ridge_) return qr_.solve(targets);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(X_.rows() + X_.cols());
    rhs.head(X_.rows()) = targets;
    return qr_.solve(rhs);
  }

  BasisSpec basis_;
  std::size_t n_features_ = 0;
  std::size_t n_basis_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd scale_;
  detail::StandardizedBasis sb_;
  Eigen::MatrixXd X_;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr_;
  double condition_ = 0.0;
  bool ridge_ = false;
};

inline RegressionFit fit(const Eigen::Ref<const Eigen::MatrixXd>& features,
                         const Eigen::Ref<const Eigen::VectorXd>& targets, const BasisSpec& basis) {
  return LeastSquaresProjector(features, basis).fit(targets);
}

inline Eigen::VectorXd predict(const RegressionFit& fit, const Eigen::Ref<const Eigen::MatrixXd>& features) {
  if (features.cols() != fit.feature_mean.size())
    throw std::invalid_argument("predict: fit has " + std::to_string(fit.feature_mean.size()) +
                                " feature(s), got " + std::to_string(features.cols()));
  const auto sb = detail::standardized_basis(static_cast<std::size_t>(features.cols()), fit.basis, fit.feature_scale);
  Eigen::MatrixXd X;
  detail::standardized_design(features, fit.feature_mean, fit.feature_scale, sb, X);
  Eigen::VectorXd active(static_cast<Eigen::Index>(sb.active.size()));
  for (std::size_t a = 0; a < sb.active.size(); ++a)
    active(static_cast<Eigen::Index>(a)) = fit.coefficients(static_cast<Eigen::Index>(sb.active[a]));
  Eigen::VectorXd out = X * active;
  return out;
}

/// Z_k ~ E[next_Y * dW_k | F_k] / dt, component by component. `dw` holds one
/// row per sample, one column per W dimension. next_Y is centered by its own
/// projection first; the conditional mean is unchanged and a next_Y that the
/// basis reproduces gives Z = 0 exactly.
inline Eigen::MatrixXd estimate_z(const LeastSquaresProjector& projector, const Eigen::Ref<const Eigen::VectorXd>& next_y,
                                  const Eigen::Ref<const Eigen::MatrixXd>& dw, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("estimate_z: dt must be positive");
  if (dw.rows() != next_y.size()) throw std::invalid_argument("estimate_z: dW rows do not match next_Y");
  Eigen::MatrixXd z(dw.rows(), dw.cols());
  const Eigen::VectorXd centered = next_y - projector.project(next_y);
  Eigen::VectorXd target(dw.rows());
  for (Eigen::Index j = 0; j < dw.cols(); ++j) {
    target = centered.cwiseProduct(dw.col(j)) / dt;
    projector.project(target, z.col(j));
  }
  return z;
}

inline Eigen::MatrixXd estimate_z(const Eigen::Ref<const Eigen::VectorXd>& next_y,
                                  const Eigen::Ref<const Eigen::MatrixXd>& dw, double dt,
                                  const Eigen::Ref<const Eigen::MatrixXd>& features, const BasisSpec& basis) {
  return estimate_z(LeastSquaresProjector(features, basis), next_y, dw, dt);
}

} // namespace bdsde

#endif // BDSDE_REGRESSION_HPP
