#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>

#include "ebridge/error.hpp"
#include "ebridge/linalg.hpp"
#include "ebridge/model.hpp"

namespace ebridge::bridge {

using linalg::Matrix;
using linalg::Vector;

/// Δ̂₀ = 0, Δ̂ₖ = ε̂₁ + … + ε̂ₖ.
inline Vector partial_sums(std::span<const double> residuals) {
  Vector out(residuals.size() + 1, 0.0);
  for (std::size_t k = 0; k < residuals.size(); ++k) out[k + 1] = out[k] + residuals[k];
  return out;
}

/// The self-normalized residual bridge Z⁰ₙ, stored by its values at t = k/n
/// and linearly interpolated in between.
class BridgeProcess {
 public:
  explicit BridgeProcess(Vector node_values) : nodes_(std::move(node_values)) {
    if (nodes_.size() < 2) throw error(errc::dimension_mismatch, "bridge needs at least two nodes");
  }

  [[nodiscard]] std::size_t n() const noexcept { return nodes_.size() - 1; }
  [[nodiscard]] const Vector& node_values() const noexcept { return nodes_; }

  [[nodiscard]] double eval(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) throw error(errc::out_of_domain, "t=" + std::to_string(t) + " not in [0,1]");
    const std::size_t n_ = n();
    if (t == 1.0) return nodes_[n_];
    const double pos = t * static_cast<double>(n_);
    const auto k = std::min(static_cast<std::size_t>(std::floor(pos)), n_ - 1);
    const double lambda = pos - static_cast<double>(k);
    if (lambda == 0.0) return nodes_[k];
    return (1.0 - lambda) * nodes_[k] + lambda * nodes_[k + 1];
  }

 private:
  Vector nodes_;
};

/// Z⁰ₙ(k/n) = (Δ̂ₖ − (k/n)Δ̂ₙ) / (σ̂√n). The noise scale σ of Zₙ cancels, so
/// only data enter.
inline BridgeProcess empirical_bridge(const model::RegressionFit& fit) {
  const double sigma_hat = std::sqrt(fit.sigma_hat2);
  // Residuals at roundoff level relative to the response mean a perfect fit.
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * std::max(fit.response_scale, 1e-300);
  if (!(sigma_hat > floor))
    throw error(errc::degenerate_residuals,
                "residual variance is zero (perfect fit); the bridge is undefined");

  const Vector sums = partial_sums(fit.residuals);
  const std::size_t n = fit.residuals.size();
  const double nd = static_cast<double>(n);
  const double total = sums[n];
  const double denom = sigma_hat * std::sqrt(nd);
  Vector nodes(n + 1, 0.0);
  for (std::size_t k = 1; k < n; ++k)
    nodes[k] = (sums[k] - (static_cast<double>(k) / nd) * total) / denom;
  return BridgeProcess(std::move(nodes));
}

/// Lₙ at the nodes: row k is (1/n)·(sum of the first k rows of x).
inline Matrix lorentz_curve(const Matrix& x) {
  const std::size_t n = x.rows();
  const std::size_t m = x.cols();
  const double nd = static_cast<double>(n);
  Matrix out(n + 1, m);
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      s += x(k, j);
      out(k + 1, j) = s / nd;
    }
  }
  return out;
}

/// Ĝ = XᵀX / n.
inline Matrix g_hat(const Matrix& x) {
  Matrix g = linalg::gram(x);
  const double nd = static_cast<double>(x.rows());
  Matrix out(g.rows(), g.cols());
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j) out(i, j) = g(i, j) / nd;
  return out;
}

/// Node index [n·t], snapping to the nearest node when n·t is within 1e-9 of
/// an integer so that grid points like 1/3 do not flicker.
inline std::size_t floor_index(double t, std::size_t n) {
  const double pos = t * static_cast<double>(n);
  const double nearest = std::round(pos);
  const double k = std::abs(pos - nearest) < 1e-9 ? nearest : std::floor(pos);
  return std::min(static_cast<std::size_t>(std::max(k, 0.0)), n);
}

/// Estimated covariance kernel K̂⁰ of the bridge, built from the ordered
/// design: empirical Lorentz curve Lₙ and second-moment matrix Ĝ.
///
///   K̂⁰(s,t) = min(s,t) − st − L⁰ₙ(s) Ĝ⁻¹ L⁰ₙ(t)ᵀ,   L⁰ₙ(u) = Lₙ(u) − u·Lₙ(1)
///
/// Lₙ between nodes follows the step convention Lₙ(u) = Lₙ([nu]/n).
class CovarianceModel {
 public:
  explicit CovarianceModel(const Matrix& x)
      : lorentz_(lorentz_curve(x)), g_hat_(bridge::g_hat(x)), g_factor_(g_hat_) {}

  [[nodiscard]] std::size_t n() const noexcept { return lorentz_.rows() - 1; }
  [[nodiscard]] std::size_t m() const noexcept { return lorentz_.cols(); }
  [[nodiscard]] const Matrix& lorentz_nodes() const noexcept { return lorentz_; }
  [[nodiscard]] const Matrix& g_hat() const noexcept { return g_hat_; }

  /// Lₙ(t), row vector of length m.
  [[nodiscard]] Vector lorentz(double t) const {
    check_domain(t);
    const auto r = lorentz_.row(floor_index(t, n()));
    return {r.begin(), r.end()};
  }

  /// L⁰ₙ(t) = Lₙ(t) − t·Lₙ(1).
  [[nodiscard]] Vector centered_lorentz(double t) const {
    Vector l = lorentz(t);
    const auto end = lorentz_.row(n());
    for (std::size_t j = 0; j < l.size(); ++j) l[j] -= t * end[j];
    return l;
  }

  [[nodiscard]] double k0_hat(double s, double t) const {
    check_domain(s);
    check_domain(t);
    const double brownian = std::min(s, t) - s * t;
    return brownian - g_factor_.inverse_bilinear(centered_lorentz(s), centered_lorentz(t));
  }

 private:
  static void check_domain(double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw error(errc::out_of_domain, "t=" + std::to_string(t) + " not in [0,1]");
  }

  Matrix lorentz_;
  Matrix g_hat_;
  linalg::Cholesky g_factor_;
};

inline double k0_hat(const CovarianceModel& cm, double s, double t) { return cm.k0_hat(s, t); }

}  // namespace ebridge::bridge
