#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>

#include "ebridge/bridge.hpp"
#include "ebridge/error.hpp"
#include "ebridge/linalg.hpp"
#include "ebridge/model.hpp"

namespace ebridge::chisq {

using linalg::Matrix;
using linalg::Vector;

inline constexpr std::size_t default_degrees = 3;

struct TestResult {
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t d = 0;
  Vector grid;
  Vector q;
  Matrix q_matrix;
  double statistic = 0.0;
  double p_value = 1.0;
  double sigma_hat2 = 0.0;
  Vector theta_hat;
  bridge::BridgeProcess bridge{Vector{0.0, 0.0}};
};

inline void check_degrees(std::size_t d, std::size_t n) {
  if (d < 1 || d + 1 > n)
    throw error(errc::invalid_degrees,
                "d=" + std::to_string(d) + " must satisfy 1 <= d <= n-1 (n=" + std::to_string(n) + ")");
}

/// Grid points i/(d+1), i = 1..d.
inline Vector grid_points(std::size_t d) {
  Vector g(d);
  for (std::size_t i = 0; i < d; ++i) g[i] = static_cast<double>(i + 1) / static_cast<double>(d + 1);
  return g;
}

/// q = (Z⁰ₙ(1/(d+1)), …, Z⁰ₙ(d/(d+1))).
inline Vector grid_vector(const bridge::BridgeProcess& b, std::size_t d) {
  check_degrees(d, b.n());
  Vector q(d);
  const Vector g = grid_points(d);
  for (std::size_t i = 0; i < d; ++i) q[i] = b.eval(g[i]);
  return q;
}

/// Q = (K̂⁰(i/(d+1), j/(d+1)))ᵢⱼ, symmetrized.
inline Matrix covariance_matrix(const bridge::CovarianceModel& cm, std::size_t d) {
  check_degrees(d, cm.n());
  const Vector g = grid_points(d);
  Matrix q(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) q(i, j) = cm.k0_hat(g[i], g[j]);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double avg = 0.5 * (q(i, j) + q(j, i));
      q(i, j) = avg;
      q(j, i) = avg;
    }
  return q;
}

/// Smallest admissible Cholesky pivot of Q relative to its largest diagonal
/// entry. Q is assembled from differences of O(1) terms, so an exactly singular
/// Q can leave pivots of order 1e-16 that pass the generic SPD threshold.
inline constexpr double q_pivot_floor = 1e-10;

/// q Q⁻¹ qᵀ.
inline double statistic(const Vector& q, const Matrix& big_q) {
  if (big_q.rows() != q.size() || !big_q.square())
    throw error(errc::dimension_mismatch, "q and Q dimensions disagree");
  auto singular = [](const std::string& why) {
    return error(errc::singular_covariance,
                 "estimated covariance Q is not positive definite (" + why +
                     "); the grid is too fine for this design or the Lorentz curve is near-collinear, "
                     "try reducing d");
  };
  try {
    const linalg::Cholesky factor(big_q);
    double max_diag = 0.0;
    for (std::size_t i = 0; i < big_q.rows(); ++i) max_diag = std::max(max_diag, big_q(i, i));
    for (std::size_t i = 0; i < big_q.rows(); ++i) {
      const double pivot = factor.lower()(i, i) * factor.lower()(i, i);
      if (pivot <= q_pivot_floor * max_diag)
        throw singular("pivot " + std::to_string(i) + " is " + std::to_string(pivot) + " relative to " +
                       std::to_string(max_diag));
    }
    return factor.inverse_quadratic(q);
  } catch (const error& e) {
    if (e.code() != errc::not_positive_definite) throw;
    throw singular(e.what());
  }
}

namespace detail {

// Regularized lower incomplete gamma P(a, x) by its power series; converges
// quickly for x < a + 1.
inline double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int k = 1; k < 10000; ++k) {
    term *= x / (a + k);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-17) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma Q(a, x) by modified Lentz continued
// fraction; used for x >= a + 1.
inline double gamma_q_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double dd = 1.0 / b;
  double h = dd;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    dd = an * dd + b;
    if (std::abs(dd) < tiny) dd = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    dd = 1.0 / dd;
    const double delta = dd * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

/// P(χ²_d ≤ x).
inline double chi2_cdf(double x, std::size_t d) {
  if (d < 1) throw error(errc::invalid_degrees, "chi-square needs d >= 1");
  if (!(x > 0.0)) return 0.0;
  if (std::isinf(x)) return 1.0;
  const double a = 0.5 * static_cast<double>(d);
  const double half = 0.5 * x;
  if (x < static_cast<double>(d) + 2.0) return detail::gamma_p_series(a, half);
  return 1.0 - detail::gamma_q_fraction(a, half);
}

/// P(χ²_d > x), evaluated without the cancellation in 1 − chi2_cdf for large x.
inline double chi2_sf(double x, std::size_t d) {
  if (d < 1) throw error(errc::invalid_degrees, "chi-square needs d >= 1");
  if (!(x > 0.0)) return 1.0;
  if (std::isinf(x)) return 0.0;
  const double a = 0.5 * static_cast<double>(d);
  const double half = 0.5 * x;
  if (x < static_cast<double>(d) + 2.0) return 1.0 - detail::gamma_p_series(a, half);
  return detail::gamma_q_fraction(a, half);
}

/// How rows are put in order before the residual partial sums are taken.
struct Ordering {
  enum class Kind { none, key, column };
  Kind kind = Kind::none;
  /// Covariate index for Kind::column; that covariate stays in the design.
  std::size_t column = 0;

  static Ordering as_given() { return {}; }
  static Ordering by_key() { return {Kind::key, 0}; }
  static Ordering by_column(std::size_t j) { return {Kind::column, j}; }
};

namespace detail {

template <typename F>
auto with_context(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const error& e) {
    throw error(e.code(), std::string(stage) + ": " + e.what());
  }
}

}  // namespace detail

/// Full pipeline: order rows, optionally append an intercept, fit by least
/// squares, build the bridge and the estimated kernel, and evaluate
/// qQ⁻¹qᵀ against χ²_d.
inline TestResult run_test(const model::Dataset& dataset, std::size_t d, bool intercept,
                           Ordering ordering = Ordering::by_key()) {
  const model::Dataset ordered = detail::with_context("ordering", [&] {
    switch (ordering.kind) {
      case Ordering::Kind::key: return model::order_by_key(dataset);
      case Ordering::Kind::column: return model::order_by_column(dataset, ordering.column);
      case Ordering::Kind::none: break;
    }
    return dataset;
  });
  const model::Dataset design = intercept ? model::add_intercept(ordered) : ordered;
  check_degrees(d, design.n());

  const model::RegressionFit fit = detail::with_context("fit", [&] { return model::fit_lse(design); });
  bridge::BridgeProcess process =
      detail::with_context("bridge", [&] { return bridge::empirical_bridge(fit); });
  const bridge::CovarianceModel cm =
      detail::with_context("covariance", [&] { return bridge::CovarianceModel(design.x()); });

  TestResult r;
  r.n = design.n();
  r.m = design.m();
  r.d = d;
  r.grid = grid_points(d);
  r.q = grid_vector(process, d);
  r.q_matrix = covariance_matrix(cm, d);
  r.statistic = statistic(r.q, r.q_matrix);
  r.p_value = chi2_sf(r.statistic, d);
  r.sigma_hat2 = fit.sigma_hat2;
  r.theta_hat = fit.theta_hat;
  r.bridge = std::move(process);
  return r;
}

}  // namespace ebridge::chisq
