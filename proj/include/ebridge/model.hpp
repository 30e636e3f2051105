#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ebridge/error.hpp"
#include "ebridge/linalg.hpp"

namespace ebridge::model {

using linalg::Matrix;
using linalg::Vector;

/// Observations (key, X, Y) of the linear model Y = Xθ + ε.
///
/// The same type holds the raw rows and the rows sorted by the ordering
/// variable; `ordered()` tells the two apart. Once sorted, the rows of X and Y
/// are concomitants of the order statistics of the key.
///
/// A dataset with zero covariates is a staging state only: it must receive an
/// intercept column before it can be fitted.
class Dataset {
 public:
  Dataset(Matrix x, Vector y, std::optional<Vector> order_key = std::nullopt, bool ordered = false)
      : x_(std::move(x)), y_(std::move(y)), key_(std::move(order_key)), ordered_(ordered) {
    const std::size_t n = y_.size();
    if (n < 2) throw error(errc::invalid_dataset, "need at least 2 observations, got " + std::to_string(n));
    if (x_.rows() != n && !(x_.cols() == 0 && x_.rows() == 0))
      throw error(errc::invalid_dataset, "covariate matrix has " + std::to_string(x_.rows()) +
                                             " rows but response has " + std::to_string(n));
    if (x_.rows() == 0) x_ = Matrix(n, 0);
    if (n < x_.cols() + 1)
      throw error(errc::invalid_dataset, "need n >= m+1 (n=" + std::to_string(n) +
                                             ", m=" + std::to_string(x_.cols()) + ")");
    if (!linalg::all_finite(y_)) throw error(errc::invalid_dataset, "response contains NaN or Inf");
    if (!linalg::all_finite(x_.entries()))
      throw error(errc::invalid_dataset, "covariates contain NaN or Inf");
    if (key_) {
      if (key_->size() != n) throw error(errc::invalid_dataset, "order key length does not match n");
      if (!linalg::all_finite(*key_)) throw error(errc::invalid_dataset, "order key contains NaN or Inf");
    }
  }

  [[nodiscard]] std::size_t n() const noexcept { return y_.size(); }
  [[nodiscard]] std::size_t m() const noexcept { return x_.cols(); }
  [[nodiscard]] const Matrix& x() const noexcept { return x_; }
  [[nodiscard]] const Vector& y() const noexcept { return y_; }
  [[nodiscard]] const std::optional<Vector>& order_key() const noexcept { return key_; }
  [[nodiscard]] bool ordered() const noexcept { return ordered_; }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  Matrix x_;
  Vector y_;
  std::optional<Vector> key_;
  bool ordered_ = false;
};

struct RegressionFit {
  Vector theta_hat;
  Vector residuals;
  /// Σ ε̂ᵢ² / n. The divisor is n, not n − m, so this is biased low for small n.
  double sigma_hat2 = 0.0;
  std::size_t n = 0;
  std::size_t m = 0;
  /// max |yᵢ|, the reference scale for deciding that residuals vanish.
  double response_scale = 0.0;
};

/// Stable permutation that sorts `key` ascending.
inline std::vector<std::size_t> sorting_permutation(const Vector& key) {
  std::vector<std::size_t> perm(key.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  return perm;
}

inline Dataset permute_rows(const Dataset& d, const std::vector<std::size_t>& perm, bool ordered) {
  const std::size_t n = d.n();
  const std::size_t m = d.m();
  Matrix x(n, m);
  Vector y(n);
  std::optional<Vector> key;
  if (d.order_key()) key.emplace(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t src = perm[i];
    for (std::size_t j = 0; j < m; ++j) x(i, j) = d.x()(src, j);
    y[i] = d.y()[src];
    if (key) (*key)[i] = (*d.order_key())[src];
  }
  return Dataset(std::move(x), std::move(y), std::move(key), ordered);
}

/// Sorts rows by the order key, carrying X and Y along. Ties keep their
/// original relative order; the test itself assumes a continuous key.
inline Dataset order_by_key(const Dataset& d) {
  if (!d.order_key()) throw error(errc::missing_order_key, "dataset has no ordering key");
  return permute_rows(d, sorting_permutation(*d.order_key()), true);
}

/// Sorts rows by covariate column `column`, which stays in the design.
inline Dataset order_by_column(const Dataset& d, std::size_t column) {
  if (column >= d.m())
    throw error(errc::invalid_dataset, "ordering column " + std::to_string(column) + " out of range");
  Dataset keyed(d.x(), d.y(), d.x().column(column), d.ordered());
  return order_by_key(keyed);
}

/// Appends an all-ones covariate as the last column.
inline Dataset add_intercept(const Dataset& d) {
  const std::size_t n = d.n();
  const std::size_t m = d.m();
  Matrix x(n, m + 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) x(i, j) = d.x()(i, j);
    x(i, m) = 1.0;
  }
  return Dataset(std::move(x), d.y(), d.order_key(), d.ordered());
}

inline Vector residuals_of(const Matrix& x, const Vector& y, const Vector& theta) {
  Vector r = linalg::multiply(x, theta);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = y[i] - r[i];
  return r;
}

/// Least-squares fit through the normal equations XᵀXθ = XᵀY.
///
/// One step of iterative refinement on the residuals is applied, which keeps
/// exact fits at roundoff level even for mildly ill-conditioned designs.
inline RegressionFit fit_lse(const Dataset& d) {
  if (d.m() == 0) throw error(errc::invalid_dataset, "no covariates; add an intercept first");
  const Matrix& x = d.x();
  const Matrix xtx = linalg::gram(x);
  const Matrix xt = linalg::transpose(x);

  std::optional<linalg::Cholesky> factor;
  try {
    factor.emplace(xtx);
  } catch (const error& e) {
    if (e.code() != errc::not_positive_definite) throw;
    throw error(errc::rank_deficient, std::string("XᵀX is numerically singular (") + e.what() + ")");
  }

  RegressionFit fit;
  fit.n = d.n();
  fit.m = d.m();
  fit.theta_hat = factor->solve(linalg::multiply(xt, d.y()));
  Vector r = residuals_of(x, d.y(), fit.theta_hat);
  const Vector correction = factor->solve(linalg::multiply(xt, r));
  for (std::size_t j = 0; j < fit.m; ++j) fit.theta_hat[j] += correction[j];
  fit.residuals = residuals_of(x, d.y(), fit.theta_hat);

  double ss = 0.0;
  for (double e : fit.residuals) ss += e * e;
  fit.sigma_hat2 = ss / static_cast<double>(fit.n);
  for (double v : d.y()) fit.response_scale = std::max(fit.response_scale, std::abs(v));
  return fit;
}

}  // namespace ebridge::model
