#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ebridge/error.hpp"

namespace ebridge::linalg {

using Vector = std::vector<double>;

inline bool all_finite(std::span<const double> values) noexcept {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

/// Dense row-major real matrix. Entries are always finite.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (!std::isfinite(fill)) throw error(errc::dimension_mismatch, "non-finite fill value");
  }

  Matrix(std::size_t rows, std::size_t cols, Vector entries)
      : rows_(rows), cols_(cols), data_(std::move(entries)) {
    if (data_.size() != rows_ * cols_)
      throw error(errc::dimension_mismatch, "entry count " + std::to_string(data_.size()) +
                                                " does not match " + std::to_string(rows_) + "x" +
                                                std::to_string(cols_));
    if (!all_finite(data_)) throw error(errc::dimension_mismatch, "matrix entries must be finite");
  }

  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw error(errc::dimension_mismatch, "ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
    if (!all_finite(data_)) throw error(errc::dimension_mismatch, "matrix entries must be finite");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  [[nodiscard]] std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }
  [[nodiscard]] std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }

  [[nodiscard]] Vector column(std::size_t j) const {
    Vector out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
    return out;
  }

  [[nodiscard]] const Vector& entries() const noexcept { return data_; }

  [[nodiscard]] double max_abs() const noexcept {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline Matrix multiply(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw error(errc::dimension_mismatch, "multiply: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

inline Vector multiply(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw error(errc::dimension_mismatch, "matrix-vector: length mismatch");
  Vector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

/// aᵀa, accumulated directly without forming the transpose.
inline Matrix gram(const Matrix& a) {
  const std::size_t m = a.cols();
  Matrix g(m, m);
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto r = a.row(k);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i; j < m; ++j) g(i, j) += r[i] * r[j];
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i);
  return g;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw error(errc::dimension_mismatch, "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Returns (a + aᵀ)/2. Throws NotSymmetric when some |a_ij − a_ji| exceeds
/// `rel_tol` times the largest entry magnitude.
inline Matrix symmetrized(const Matrix& a, double rel_tol = 1e-10) {
  if (!a.square()) throw error(errc::dimension_mismatch, "expected a square matrix");
  const double scale = a.max_abs();
  Matrix s = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      if (std::abs(a(i, j) - a(j, i)) > rel_tol * scale)
        throw error(errc::not_symmetric, "entries (" + std::to_string(i) + "," + std::to_string(j) +
                                             ") and their transpose differ beyond tolerance");
      const double avg = 0.5 * (a(i, j) + a(j, i));
      s(i, j) = avg;
      s(j, i) = avg;
    }
  return s;
}

/// Lower-triangular factor L of an SPD matrix, with L·Lᵀ = a.
///
/// A pivot is accepted only if it exceeds rows × ε × max diagonal entry, so
/// the singularity test scales with the matrix.
class Cholesky {
 public:
  explicit Cholesky(const Matrix& a) : lower_(symmetrized(a)) {
    const std::size_t n = lower_.rows();
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, lower_(i, i));
    const double threshold =
        static_cast<double>(n) * std::numeric_limits<double>::epsilon() * max_diag;

    for (std::size_t j = 0; j < n; ++j) {
      double pivot = lower_(j, j);
      for (std::size_t k = 0; k < j; ++k) pivot -= lower_(j, k) * lower_(j, k);
      if (!(pivot > threshold))
        throw error(errc::not_positive_definite,
                    "pivot " + std::to_string(j) + " is " + std::to_string(pivot) +
                        " (threshold " + std::to_string(threshold) + ")");
      const double root = std::sqrt(pivot);
      lower_(j, j) = root;
      for (std::size_t i = j + 1; i < n; ++i) {
        double v = lower_(i, j);
        for (std::size_t k = 0; k < j; ++k) v -= lower_(i, k) * lower_(j, k);
        lower_(i, j) = v / root;
      }
      for (std::size_t k = j + 1; k < n; ++k) lower_(j, k) = 0.0;
    }
  }

  [[nodiscard]] const Matrix& lower() const noexcept { return lower_; }
  [[nodiscard]] std::size_t size() const noexcept { return lower_.rows(); }

  /// Solves L·y = b.
  [[nodiscard]] Vector forward(std::span<const double> b) const {
    check_length(b.size());
    const std::size_t n = size();
    Vector y(b.begin(), b.end());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < i; ++k) y[i] -= lower_(i, k) * y[k];
      y[i] /= lower_(i, i);
    }
    return y;
  }

  /// Solves Lᵀ·x = y.
  [[nodiscard]] Vector backward(std::span<const double> y) const {
    check_length(y.size());
    const std::size_t n = size();
    Vector x(y.begin(), y.end());
    for (std::size_t ii = n; ii-- > 0;) {
      for (std::size_t k = ii + 1; k < n; ++k) x[ii] -= lower_(k, ii) * x[k];
      x[ii] /= lower_(ii, ii);
    }
    return x;
  }

  [[nodiscard]] Vector solve(std::span<const double> b) const { return backward(forward(b)); }

  /// vᵀ a⁻¹ v as ‖L⁻¹v‖².
  [[nodiscard]] double inverse_quadratic(std::span<const double> v) const {
    const Vector y = forward(v);
    return dot(y, y);
  }

  /// uᵀ a⁻¹ v.
  [[nodiscard]] double inverse_bilinear(std::span<const double> u, std::span<const double> v) const {
    return dot(forward(u), forward(v));
  }

 private:
  void check_length(std::size_t len) const {
    if (len != size())
      throw error(errc::dimension_mismatch, "right-hand side has length " + std::to_string(len) +
                                                ", expected " + std::to_string(size()));
  }

  Matrix lower_;
};

inline Matrix cholesky(const Matrix& a) { return Cholesky(a).lower(); }

inline Vector solve_spd(const Matrix& a, std::span<const double> b) { return Cholesky(a).solve(b); }

inline double quadratic_form_inv(const Matrix& a, std::span<const double> v) {
  return Cholesky(a).inverse_quadratic(v);
}

}  // namespace ebridge::linalg
