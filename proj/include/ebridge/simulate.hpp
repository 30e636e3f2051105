#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "ebridge/bridge.hpp"
#include "ebridge/chisq_test.hpp"
#include "ebridge/error.hpp"
#include "ebridge/linalg.hpp"
#include "ebridge/model.hpp"

namespace ebridge::simulate {

using linalg::Matrix;
using linalg::Vector;

// ---------------------------------------------------------------------------
// Model specification

enum class Family { uniform, normal, exponential };

/// Marginal law of an ordering covariate: uniform(a,b), normal(mu,sd) or
/// exponential(rate).
struct Distribution {
  Family family = Family::uniform;
  double p1 = 0.0;
  double p2 = 1.0;

  static Distribution uniform(double a, double b) { return {Family::uniform, a, b}; }
  static Distribution normal(double mean, double sd) { return {Family::normal, mean, sd}; }
  static Distribution exponential(double rate) { return {Family::exponential, rate, 0.0}; }

  void validate() const {
    switch (family) {
      case Family::uniform:
        if (!(p1 < p2)) throw error(errc::invalid_spec, "uniform(a,b) needs a < b");
        break;
      case Family::normal:
        if (!(p2 > 0.0)) throw error(errc::invalid_spec, "normal(mu,sd) needs sd > 0");
        break;
      case Family::exponential:
        if (!(p1 > 0.0)) throw error(errc::invalid_spec, "exponential(rate) needs rate > 0");
        break;
    }
  }

  [[nodiscard]] double mean() const {
    switch (family) {
      case Family::uniform: return 0.5 * (p1 + p2);
      case Family::normal: return p1;
      case Family::exponential: return 1.0 / p1;
    }
    return 0.0;
  }

  [[nodiscard]] double variance() const {
    switch (family) {
      case Family::uniform: return (p2 - p1) * (p2 - p1) / 12.0;
      case Family::normal: return p2 * p2;
      case Family::exponential: return 1.0 / (p1 * p1);
    }
    return 0.0;
  }

  [[nodiscard]] double second_moment() const { return variance() + mean() * mean(); }

  /// F⁻¹(u).
  [[nodiscard]] double quantile(double u) const {
    switch (family) {
      case Family::uniform: return p1 + (p2 - p1) * u;
      case Family::normal: return p1 + p2 * boost::math::quantile(boost::math::normal(), u);
      case Family::exponential: return -std::log1p(-u) / p1;
    }
    return 0.0;
  }

  /// L₁(t) = ∫₀ᵗ F⁻¹(u) du, the induced Lorentz curve of the ordering covariate.
  [[nodiscard]] double integrated_quantile(double t) const {
    switch (family) {
      case Family::uniform: return p1 * t + 0.5 * (p2 - p1) * t * t;
      case Family::normal: {
        // ∫₀ᵗ Φ⁻¹ = −φ(Φ⁻¹(t)), which vanishes at both ends.
        if (t <= 0.0 || t >= 1.0) return p1 * t;
        const boost::math::normal std_normal;
        return p1 * t - p2 * boost::math::pdf(std_normal, boost::math::quantile(std_normal, t));
      }
      case Family::exponential:
        if (t >= 1.0) return 1.0 / p1;
        return ((1.0 - t) * std::log1p(-t) + t) / p1;
    }
    return 0.0;
  }

  template <typename Rng>
  double sample(Rng& rng) const {
    switch (family) {
      case Family::uniform: return std::uniform_real_distribution<double>(p1, p2)(rng);
      case Family::normal: return std::normal_distribution<double>(p1, p2)(rng);
      case Family::exponential: return std::exponential_distribution<double>(p1)(rng);
    }
    return 0.0;
  }
};

/// Covariate driven by the hidden uniform ordering variable δ:
/// ξ = intercept + slope·δ + spread·N(0,1), so h(x) = intercept + slope·x.
struct LinearCovariate {
  double intercept = 0.0;
  double slope = 1.0;
  double spread = 0.0;
};

/// Error law, always scaled to variance noise_sd².
enum class Noise { normal, uniform, student_t5 };

enum class ShiftKind { none, quadratic, change_point };

/// Departure from the linear model added to E[Y]; used for power runs only.
/// quadratic adds magnitude·u², change_point adds magnitude·1{u > median},
/// where u is the ordering variable.
struct MeanShift {
  ShiftKind kind = ShiftKind::none;
  double magnitude = 0.0;
};

enum class OrderKind {
  /// Rows ordered by an unobserved δ ~ U(0,1); covariates follow LinearCovariate.
  external,
  /// Rows ordered by the single covariate ξ₁ itself, which stays in the design.
  covariate,
};

struct ModelSpec {
  OrderKind kind = OrderKind::covariate;
  Distribution covariate_dist = Distribution::uniform(0.0, 1.0);
  std::vector<LinearCovariate> covariates;
  Noise noise = Noise::normal;
  double noise_sd = 1.0;
  /// True coefficients; with an intercept its coefficient is last.
  Vector theta{1.0, 0.0};
  bool intercept = true;
  MeanShift mean_shift;

  [[nodiscard]] std::size_t covariate_count() const {
    return kind == OrderKind::covariate ? 1 : covariates.size();
  }
  [[nodiscard]] std::size_t design_columns() const { return covariate_count() + (intercept ? 1 : 0); }

  void validate() const {
    if (!(noise_sd > 0.0) || !std::isfinite(noise_sd)) throw error(errc::invalid_spec, "noise_sd must be > 0");
    if (design_columns() == 0) throw error(errc::invalid_spec, "design has no columns");
    if (theta.size() != design_columns())
      throw error(errc::invalid_spec, "theta has length " + std::to_string(theta.size()) + ", design has " +
                                          std::to_string(design_columns()) + " columns");
    if (!linalg::all_finite(theta)) throw error(errc::invalid_spec, "theta must be finite");
    if (kind == OrderKind::covariate) covariate_dist.validate();
    for (const auto& c : covariates)
      if (!(c.spread >= 0.0)) throw error(errc::invalid_spec, "covariate spread must be >= 0");
    if (!std::isfinite(mean_shift.magnitude)) throw error(errc::invalid_spec, "shift magnitude must be finite");
  }

  /// Uniform(0,1) covariate ordering itself, with intercept: the setting of the
  /// closed-form kernel min(s,t) − st − 12·L₁⁰(s)L₁⁰(t).
  static ModelSpec uniform_with_intercept(double slope = 1.0, double level = 0.0) {
    ModelSpec s;
    s.theta = {slope, level};
    return s;
  }

  static ModelSpec intercept_only(double level = 0.0) {
    ModelSpec s;
    s.kind = OrderKind::external;
    s.theta = {level};
    return s;
  }
};

// ---------------------------------------------------------------------------
// Theoretical kernels

/// Closed-form covariance of the limiting Gaussian process:
///
///   theorem1        K(s,t)  = min(s,t) − L(s) G⁻¹ L(t)ᵀ
///   corollary1_k0   K⁰(s,t) = min(s,t) − st − L⁰(s) G⁻¹ L⁰(t)ᵀ
///   corollary2      min(s,t) − L₁(s)L₁(t) / E ξ²
///   corollary3      min(s,t) − st − L₁⁰(s)L₁⁰(t) / Var ξ
///   brownian_bridge min(s,t) − st
class TheoreticalKernel {
 public:
  enum class Kind { theorem1, corollary1_k0, corollary2, corollary3, brownian_bridge };
  using Curve = std::function<Vector(double)>;

  static TheoreticalKernel brownian_bridge() { return TheoreticalKernel(Kind::brownian_bridge); }

  static TheoreticalKernel theorem1(Curve lorentz, const Matrix& g) {
    return TheoreticalKernel(Kind::theorem1, std::move(lorentz), g);
  }

  static TheoreticalKernel corollary1_k0(Curve lorentz, const Matrix& g) {
    return TheoreticalKernel(Kind::corollary1_k0, std::move(lorentz), g);
  }

  /// `moment` is E ξ² for corollary2 and Var ξ for corollary3.
  static TheoreticalKernel scalar(Kind kind, std::function<double(double)> l1, double moment) {
    if (kind != Kind::corollary2 && kind != Kind::corollary3)
      throw error(errc::invalid_spec, "scalar kernels are corollary2 or corollary3");
    if (!(moment > 0.0)) throw error(errc::invalid_spec, "kernel moment must be positive");
    TheoreticalKernel k(kind);
    k.l1_ = std::move(l1);
    k.moment_ = moment;
    return k;
  }

  [[nodiscard]] Kind kind() const noexcept { return kind_; }

  double operator()(double s, double t) const {
    if (!(s >= 0.0 && s <= 1.0 && t >= 0.0 && t <= 1.0))
      throw error(errc::out_of_domain, "kernel arguments must lie in [0,1]");
    const double mn = std::min(s, t);
    switch (kind_) {
      case Kind::brownian_bridge: return mn - s * t;
      case Kind::theorem1: return mn - g_factor_->inverse_bilinear(lorentz_(s), lorentz_(t));
      case Kind::corollary1_k0: return mn - s * t - g_factor_->inverse_bilinear(centered(s), centered(t));
      case Kind::corollary2: return mn - l1_(s) * l1_(t) / moment_;
      case Kind::corollary3: {
        const double end = l1_(1.0);
        return mn - s * t - (l1_(s) - s * end) * (l1_(t) - t * end) / moment_;
      }
    }
    return 0.0;
  }

  [[nodiscard]] Matrix on_grid(const Vector& grid) const {
    Matrix k(grid.size(), grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
      for (std::size_t j = 0; j < grid.size(); ++j) k(i, j) = (*this)(grid[i], grid[j]);
    return linalg::symmetrized(k);
  }

 private:
  explicit TheoreticalKernel(Kind kind) : kind_(kind) {}
  TheoreticalKernel(Kind kind, Curve lorentz, const Matrix& g)
      : kind_(kind), lorentz_(std::move(lorentz)), g_factor_(std::in_place, g) {}

  [[nodiscard]] Vector centered(double t) const {
    Vector l = lorentz_(t);
    const Vector end = lorentz_(1.0);
    for (std::size_t j = 0; j < l.size(); ++j) l[j] -= t * end[j];
    return l;
  }

  Kind kind_;
  Curve lorentz_;
  std::optional<linalg::Cholesky> g_factor_;
  std::function<double(double)> l1_;
  double moment_ = 1.0;
};

/// Population Lorentz curve L(t) of the full design (intercept column last).
inline TheoreticalKernel::Curve population_lorentz(const ModelSpec& spec) {
  return [spec](double t) {
    Vector l;
    l.reserve(spec.design_columns());
    if (spec.kind == OrderKind::covariate) {
      l.push_back(spec.covariate_dist.integrated_quantile(t));
    } else {
      for (const auto& c : spec.covariates) l.push_back(c.intercept * t + 0.5 * c.slope * t * t);
    }
    if (spec.intercept) l.push_back(t);
    return l;
  };
}

/// Population second-moment matrix G = E ξᵀξ of the full design.
inline Matrix population_g(const ModelSpec& spec) {
  Vector mean;
  Matrix g(spec.design_columns(), spec.design_columns());
  if (spec.kind == OrderKind::covariate) {
    g(0, 0) = spec.covariate_dist.second_moment();
    mean.push_back(spec.covariate_dist.mean());
  } else {
    const auto& cs = spec.covariates;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      for (std::size_t j = 0; j < cs.size(); ++j) {
        // ∫₀¹ (aᵢ + bᵢx)(aⱼ + bⱼx) dx
        g(i, j) = cs[i].intercept * cs[j].intercept +
                  0.5 * (cs[i].intercept * cs[j].slope + cs[j].intercept * cs[i].slope) +
                  cs[i].slope * cs[j].slope / 3.0;
      }
      g(i, i) += cs[i].spread * cs[i].spread;
      mean.push_back(cs[i].intercept + 0.5 * cs[i].slope);
    }
  }
  if (spec.intercept) {
    const std::size_t last = spec.design_columns() - 1;
    for (std::size_t i = 0; i < last; ++i) {
      g(i, last) = mean[i];
      g(last, i) = mean[i];
    }
    g(last, last) = 1.0;
  }
  return g;
}

/// Covariance kernel of the bridge Z⁰ₙ in the large-sample limit.
inline TheoreticalKernel bridge_kernel(const ModelSpec& spec) {
  spec.validate();
  if (spec.covariate_count() == 0) return TheoreticalKernel::brownian_bridge();
  if (spec.kind == OrderKind::covariate && spec.intercept) {
    const Distribution dist = spec.covariate_dist;
    return TheoreticalKernel::scalar(
        TheoreticalKernel::Kind::corollary3, [dist](double t) { return dist.integrated_quantile(t); },
        dist.variance());
  }
  return TheoreticalKernel::corollary1_k0(population_lorentz(spec), population_g(spec));
}

/// Covariance kernel of the unnormalized residual process Zₙ. With an
/// intercept in the design Zₙ(1) = 0 and this coincides with bridge_kernel.
inline TheoreticalKernel theoretical_kernel(const ModelSpec& spec) {
  spec.validate();
  if (spec.intercept) return bridge_kernel(spec);
  if (spec.kind == OrderKind::covariate) {
    const Distribution dist = spec.covariate_dist;
    return TheoreticalKernel::scalar(
        TheoreticalKernel::Kind::corollary2, [dist](double t) { return dist.integrated_quantile(t); },
        dist.second_moment());
  }
  return TheoreticalKernel::theorem1(population_lorentz(spec), population_g(spec));
}

// ---------------------------------------------------------------------------
// Data generation

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of replicate r, a function of (seed, r) only.
constexpr std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t r) noexcept {
  return mix64(mix64(seed) ^ mix64(r + 0x632be59bd9b4e019ULL));
}

template <typename Rng>
double draw_noise(Noise kind, double sd, Rng& rng) {
  switch (kind) {
    case Noise::normal: return sd * std::normal_distribution<double>(0.0, 1.0)(rng);
    case Noise::uniform: {
      const double half = std::sqrt(3.0);
      return sd * std::uniform_real_distribution<double>(-half, half)(rng);
    }
    case Noise::student_t5:
      // Var t₅ = 5/3.
      return sd * std::sqrt(3.0 / 5.0) * std::student_t_distribution<double>(5.0)(rng);
  }
  return 0.0;
}

inline double shift_value(const ModelSpec& spec, double u) {
  switch (spec.mean_shift.kind) {
    case ShiftKind::none: return 0.0;
    case ShiftKind::quadratic: return spec.mean_shift.magnitude * u * u;
    case ShiftKind::change_point: {
      const double median = spec.kind == OrderKind::covariate ? spec.covariate_dist.quantile(0.5) : 0.5;
      return u > median ? spec.mean_shift.magnitude : 0.0;
    }
  }
  return 0.0;
}

/// One i.i.d. sample of n rows. The dataset holds the covariates without the
/// intercept column and carries the ordering variable as its order key; it is
/// not yet ordered.
inline model::Dataset generate_dataset(const ModelSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n < 2) throw error(errc::invalid_spec, "n must be >= 2");
  const std::size_t m = spec.covariate_count();
  std::mt19937_64 rng(seed);
  Matrix x(n, m);
  Vector y(n);
  Vector key(n);
  for (std::size_t i = 0; i < n; ++i) {
    double u = 0.0;
    if (spec.kind == OrderKind::covariate) {
      u = spec.covariate_dist.sample(rng);
      x(i, 0) = u;
    } else {
      u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      for (std::size_t j = 0; j < m; ++j) {
        const auto& c = spec.covariates[j];
        double xi = c.intercept + c.slope * u;
        if (c.spread > 0.0) xi += c.spread * std::normal_distribution<double>(0.0, 1.0)(rng);
        x(i, j) = xi;
      }
    }
    key[i] = u;
    double mean = 0.0;
    for (std::size_t j = 0; j < m; ++j) mean += x(i, j) * spec.theta[j];
    if (spec.intercept) mean += spec.theta[m];
    y[i] = mean + shift_value(spec, u) + draw_noise(spec.noise, spec.noise_sd, rng);
  }
  return model::Dataset(std::move(x), std::move(y), std::move(key));
}

// ---------------------------------------------------------------------------
// Parallel replicate execution

/// Worker count: explicit value if nonzero, else EBRIDGE_THREADS, else the
/// hardware concurrency.
inline std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("EBRIDGE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Calls body(r) for r in [0, count) on `threads` workers. Any exception is
/// rethrown for the lowest failing r, independent of scheduling.
template <typename Body>
void for_each_replicate(std::size_t count, std::size_t threads, Body&& body) {
  threads = std::min(resolve_threads(threads), std::max<std::size_t>(count, 1));
  std::vector<std::exception_ptr> failures(threads);
  std::vector<std::size_t> failed_at(threads, count);
  auto work = [&](std::size_t w) {
    for (std::size_t r = w; r < count; r += threads) {
      try {
        body(r);
      } catch (...) {
        failures[w] = std::current_exception();
        failed_at[w] = r;
        return;
      }
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  std::size_t first = threads;
  for (std::size_t w = 0; w < threads; ++w)
    if (failures[w] && (first == threads || failed_at[w] < failed_at[first])) first = w;
  if (first != threads) std::rethrow_exception(failures[first]);
}

// ---------------------------------------------------------------------------
// Monte Carlo experiments

struct RejectionReport {
  ModelSpec spec;
  std::size_t n = 0;
  std::size_t reps = 0;
  std::size_t d = 0;
  double alpha = 0.0;
  /// Fraction of non-failing replicates with p < alpha.
  double rejection_rate = 0.0;
  double standard_error = 0.0;
  /// Replicates whose Q was singular; excluded from the rate.
  std::size_t failures = 0;
};

namespace detail {

inline RejectionReport rejection_run(const ModelSpec& spec, std::size_t n, std::size_t reps, std::size_t d,
                                     double alpha, std::uint64_t seed, std::size_t threads) {
  spec.validate();
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw error(errc::invalid_spec, "alpha must lie in [0,1]");
  if (reps == 0) throw error(errc::invalid_spec, "reps must be >= 1");
  chisq::check_degrees(d, n);

  enum Outcome : unsigned char { accept, reject, singular };
  std::vector<Outcome> outcomes(reps, accept);
  for_each_replicate(reps, threads, [&](std::size_t r) {
    try {
      const model::Dataset data = generate_dataset(spec, n, replicate_seed(seed, r));
      const chisq::TestResult res = chisq::run_test(data, d, spec.intercept, chisq::Ordering::by_key());
      outcomes[r] = res.p_value < alpha ? reject : accept;
    } catch (const error& e) {
      if (e.code() == errc::singular_covariance) {
        outcomes[r] = singular;
        return;
      }
      throw error(e.code(), "replicate " + std::to_string(r) + ": " + e.what());
    }
  });

  RejectionReport report;
  report.spec = spec;
  report.n = n;
  report.reps = reps;
  report.d = d;
  report.alpha = alpha;
  std::size_t rejections = 0;
  for (Outcome o : outcomes) {
    if (o == singular) ++report.failures;
    if (o == reject) ++rejections;
  }
  const std::size_t used = reps - report.failures;
  if (used > 0) {
    const double p = static_cast<double>(rejections) / static_cast<double>(used);
    report.rejection_rate = p;
    report.standard_error = std::sqrt(p * (1.0 - p) / static_cast<double>(used));
  }
  return report;
}

}  // namespace detail

/// Empirical size of the test under the null (no mean shift).
inline RejectionReport monte_carlo_level(const ModelSpec& spec, std::size_t n, std::size_t reps, std::size_t d,
                                         double alpha, std::uint64_t seed, std::size_t threads = 0) {
  if (spec.mean_shift.kind != ShiftKind::none)
    throw error(errc::invalid_spec, "level runs require the null model (no mean shift)");
  return detail::rejection_run(spec, n, reps, d, alpha, seed, threads);
}

/// Empirical rejection rate under a mean-shift alternative.
inline RejectionReport monte_carlo_power(const ModelSpec& spec, std::size_t n, std::size_t reps, std::size_t d,
                                         double alpha, std::uint64_t seed, std::size_t threads = 0) {
  if (spec.mean_shift.kind == ShiftKind::none)
    throw error(errc::invalid_spec, "power runs require a mean shift");
  return detail::rejection_run(spec, n, reps, d, alpha, seed, threads);
}

/// Sample covariance (divisor reps − 1) of vectors stored row-wise.
inline Matrix sample_covariance(const std::vector<Vector>& draws, std::size_t dim) {
  Matrix cov(dim, dim);
  if (draws.size() < 2) return cov;
  const double count = static_cast<double>(draws.size());
  Vector mean(dim, 0.0);
  for (const auto& v : draws)
    for (std::size_t i = 0; i < dim; ++i) mean[i] += v[i];
  for (double& v : mean) v /= count;
  for (const auto& v : draws)
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j) cov(i, j) += (v[i] - mean[i]) * (v[j] - mean[j]);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) cov(i, j) /= count - 1.0;
  return cov;
}

enum class ProcessKind {
  /// Z⁰ₙ, computable from data alone.
  bridge,
  /// Zₙ with nodes Δ̂ₖ/(σ√n), using the true σ known to the simulator.
  unnormalized,
};

struct CovarianceReport {
  ModelSpec spec;
  ProcessKind process = ProcessKind::bridge;
  std::size_t n = 0;
  std::size_t reps = 0;
  Vector grid;
  Matrix empirical;
  Matrix theoretical;
  double max_abs_deviation = 0.0;
  std::size_t failures = 0;
};

/// Sample covariance of the process at `grid` across replicates, next to the
/// limiting kernel (bridge_kernel for Z⁰ₙ, theoretical_kernel for Zₙ).
inline CovarianceReport empirical_covariance(const ModelSpec& spec, std::size_t n, std::size_t reps,
                                             const Vector& grid, std::uint64_t seed,
                                             ProcessKind process = ProcessKind::bridge, std::size_t threads = 0) {
  spec.validate();
  if (reps == 0) throw error(errc::invalid_spec, "reps must be >= 1");
  if (grid.empty()) throw error(errc::invalid_spec, "grid is empty");
  for (double g : grid)
    if (!(g > 0.0 && g < 1.0)) throw error(errc::invalid_spec, "grid points must lie in (0,1)");

  std::vector<Vector> draws(reps);
  for_each_replicate(reps, threads, [&](std::size_t r) {
    try {
      model::Dataset data = model::order_by_key(generate_dataset(spec, n, replicate_seed(seed, r)));
      if (spec.intercept) data = model::add_intercept(data);
      const model::RegressionFit fit = model::fit_lse(data);
      Vector values(grid.size());
      if (process == ProcessKind::bridge) {
        const bridge::BridgeProcess b = bridge::empirical_bridge(fit);
        for (std::size_t i = 0; i < grid.size(); ++i) values[i] = b.eval(grid[i]);
      } else {
        Vector nodes = bridge::partial_sums(fit.residuals);
        const double scale = spec.noise_sd * std::sqrt(static_cast<double>(n));
        for (double& v : nodes) v /= scale;
        const bridge::BridgeProcess path(std::move(nodes));
        for (std::size_t i = 0; i < grid.size(); ++i) values[i] = path.eval(grid[i]);
      }
      draws[r] = std::move(values);
    } catch (const error& e) {
      throw error(e.code(), "replicate " + std::to_string(r) + ": " + e.what());
    }
  });

  CovarianceReport report;
  report.spec = spec;
  report.process = process;
  report.n = n;
  report.reps = reps;
  report.grid = grid;
  report.empirical = sample_covariance(draws, grid.size());
  const TheoreticalKernel kernel =
      process == ProcessKind::bridge ? bridge_kernel(spec) : theoretical_kernel(spec);
  report.theoretical = kernel.on_grid(grid);
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (std::size_t j = 0; j < grid.size(); ++j)
      report.max_abs_deviation =
          std::max(report.max_abs_deviation, std::abs(report.empirical(i, j) - report.theoretical(i, j)));
  return report;
}

inline Matrix empirical_bridge_covariance(const ModelSpec& spec, std::size_t n, std::size_t reps,
                                          const Vector& grid, std::uint64_t seed, std::size_t threads = 0) {
  return empirical_covariance(spec, n, reps, grid, seed, ProcessKind::bridge, threads).empirical;
}

/// Draws from the centered Gaussian vector with covariance kernel(gᵢ, gⱼ).
class LimitSampler {
 public:
  LimitSampler(const TheoreticalKernel& kernel, const Vector& grid)
      : covariance_(kernel.on_grid(grid)), factor_(covariance_) {}

  [[nodiscard]] const Matrix& covariance() const noexcept { return covariance_; }
  [[nodiscard]] const linalg::Cholesky& factor() const noexcept { return factor_; }

  [[nodiscard]] Vector draw(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    const std::size_t k = covariance_.rows();
    Vector w(k);
    for (double& v : w) v = z(rng);
    return linalg::multiply(factor_.lower(), w);
  }

 private:
  Matrix covariance_;
  linalg::Cholesky factor_;
};

inline Vector sample_limit_vector(const TheoreticalKernel& kernel, const Vector& grid, std::uint64_t seed) {
  return LimitSampler(kernel, grid).draw(seed);
}

}  // namespace ebridge::simulate
