#include <catch2/catch_amalgamated.hpp>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ebridge/simulate.hpp"

using namespace ebridge;
using namespace ebridge::simulate;
using Catch::Approx;

namespace {

errc code_of(auto&& f) {
  try {
    f();
  } catch (const error& e) {
    return e.code();
  }
  FAIL("expected an ebridge::error");
  return errc::io_error;
}

ModelSpec no_intercept_uniform() {
  ModelSpec s;
  s.intercept = false;
  s.theta = {1.0};
  return s;
}

double quad(const std::function<double(double)>& f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 25, 1e-12);
}

}  // namespace

TEST_CASE("spec validation", "[simulate]") {
  ModelSpec s;
  s.theta = {1.0};
  CHECK(code_of([&] { s.validate(); }) == errc::invalid_spec);
  s = ModelSpec{};
  s.noise_sd = 0.0;
  CHECK(code_of([&] { generate_dataset(s, 10, 1); }) == errc::invalid_spec);
  s = ModelSpec{};
  s.covariate_dist = Distribution::uniform(1.0, 1.0);
  CHECK(code_of([&] { s.validate(); }) == errc::invalid_spec);
  ModelSpec empty = ModelSpec::intercept_only();
  empty.intercept = false;
  empty.theta = {};
  CHECK(code_of([&] { empty.validate(); }) == errc::invalid_spec);
}

TEST_CASE("generate_dataset is deterministic per seed", "[simulate]") {
  const ModelSpec spec = ModelSpec::uniform_with_intercept(2.0, 1.0);
  const model::Dataset a = generate_dataset(spec, 50, 77);
  const model::Dataset b = generate_dataset(spec, 50, 77);
  const model::Dataset c = generate_dataset(spec, 50, 78);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK(a.m() == 1);
  CHECK(*a.order_key() == a.x().column(0));
}

TEST_CASE("near-exact model leaves tiny residuals", "[simulate]") {
  ModelSpec spec = ModelSpec::uniform_with_intercept(2.0, 1.0);
  spec.noise_sd = 1e-12;
  const auto fit = model::fit_lse(model::add_intercept(generate_dataset(spec, 200, 3)));
  CHECK(std::sqrt(fit.sigma_hat2) < 1e-11);
  CHECK(std::sqrt(fit.sigma_hat2) > 1e-13);
  CHECK(fit.theta_hat[0] == Approx(2.0).epsilon(1e-9));
}

TEST_CASE("empirical Lorentz curve of generated uniform covariate", "[simulate][montecarlo]") {
  const model::Dataset d = model::order_by_key(generate_dataset(ModelSpec::uniform_with_intercept(), 100000, 9));
  const bridge::CovarianceModel cm(d.x());
  CHECK(std::abs(cm.lorentz(0.5)[0] - 0.125) < 0.005);
}

TEST_CASE("theoretical kernels: worked values", "[simulate]") {
  const TheoreticalKernel bb = theoretical_kernel(ModelSpec::intercept_only());
  CHECK(bb.kind() == TheoreticalKernel::Kind::brownian_bridge);
  CHECK(bb(0.3, 0.6) == Approx(0.3 - 0.18));

  const TheoreticalKernel c3 = theoretical_kernel(ModelSpec::uniform_with_intercept());
  CHECK(c3.kind() == TheoreticalKernel::Kind::corollary3);
  CHECK(c3(0.5, 0.5) == Approx(0.0625).epsilon(1e-14));
  const double s = 0.3, t = 0.8;
  CHECK(c3(s, t) == Approx(std::min(s, t) - s * t - (s * s / 2 - s / 2) * (t * t / 2 - t / 2) * 12.0).epsilon(1e-14));

  const TheoreticalKernel c2 = theoretical_kernel(no_intercept_uniform());
  CHECK(c2.kind() == TheoreticalKernel::Kind::corollary2);
  CHECK(c2(1.0, 1.0) == Approx(0.25).epsilon(1e-14));
}

TEST_CASE("corollary 3 equals the general K0 with an intercept column", "[simulate]") {
  for (const Distribution dist :
       {Distribution::uniform(-1.0, 3.0), Distribution::normal(0.5, 2.0), Distribution::exponential(1.5)}) {
    ModelSpec spec = ModelSpec::uniform_with_intercept();
    spec.covariate_dist = dist;
    const TheoreticalKernel closed = bridge_kernel(spec);
    const TheoreticalKernel general = TheoreticalKernel::corollary1_k0(population_lorentz(spec), population_g(spec));
    for (double a : {0.1, 0.25, 0.5, 0.9})
      for (double b : {0.2, 0.5, 0.75}) CHECK(closed(a, b) == Approx(general(a, b)).margin(1e-12));
  }
}

TEST_CASE("corollary 2 equals the theorem 1 kernel with one covariate", "[simulate]") {
  ModelSpec spec = no_intercept_uniform();
  spec.covariate_dist = Distribution::exponential(0.7);
  const TheoreticalKernel closed = theoretical_kernel(spec);
  const TheoreticalKernel general = TheoreticalKernel::theorem1(population_lorentz(spec), population_g(spec));
  for (double a : {0.1, 0.5, 1.0})
    for (double b : {0.3, 0.8, 1.0}) CHECK(closed(a, b) == Approx(general(a, b)).margin(1e-12));
}

TEST_CASE("integrated quantile matches quadrature of the quantile", "[simulate]") {
  for (const Distribution dist :
       {Distribution::uniform(2.0, 5.0), Distribution::normal(-1.0, 0.5), Distribution::exponential(2.0)}) {
    for (double t : {0.05, 0.3, 0.5, 0.8, 0.99}) {
      const double q = quad([&](double u) { return dist.quantile(u); }, 0.0, t);
      CHECK(dist.integrated_quantile(t) == Approx(q).margin(1e-8));
    }
    CHECK(dist.integrated_quantile(1.0) == Approx(dist.mean()).margin(1e-12));
  }
}

TEST_CASE("population G matches sample second moments", "[simulate][montecarlo]") {
  ModelSpec spec = ModelSpec::intercept_only();
  spec.covariates = {{0.5, 2.0, 0.3}, {-1.0, 0.0, 1.0}};
  spec.theta = {1.0, 1.0, 0.0};
  const model::Dataset d = model::add_intercept(generate_dataset(spec, 200000, 5));
  const Matrix g = population_g(spec);
  const Matrix gh = bridge::g_hat(d.x());
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(g(i, j) - gh(i, j)) < 0.03);
}

TEST_CASE("K0 kernels are symmetric and vanish on the boundary", "[simulate][property]") {
  std::vector<ModelSpec> specs{ModelSpec::intercept_only(), ModelSpec::uniform_with_intercept(), no_intercept_uniform()};
  ModelSpec ext = ModelSpec::intercept_only();
  ext.covariates = {{1.0, -2.0, 0.5}};
  ext.theta = {1.0, 0.0};
  specs.push_back(ext);
  ext.intercept = false;
  ext.theta = {1.0};
  specs.push_back(ext);
  for (const auto& spec : specs) {
    const TheoreticalKernel k = bridge_kernel(spec);
    for (double a = 0.0; a <= 1.0; a += 0.125) {
      CHECK(std::abs(k(a, 0.0)) < 1e-15);
      CHECK(std::abs(k(1.0, a)) < 1e-15);
      for (double b = 0.0; b <= 1.0; b += 0.125) CHECK(k(a, b) == Approx(k(b, a)).margin(1e-15));
    }
  }
}

TEST_CASE("monte_carlo_level boundary alphas", "[simulate]") {
  const ModelSpec spec = ModelSpec::uniform_with_intercept();
  CHECK(monte_carlo_level(spec, 50, 40, 3, 0.0, 1).rejection_rate == 0.0);
  CHECK(monte_carlo_level(spec, 50, 40, 3, 1.0, 1).rejection_rate == 1.0);
  CHECK(code_of([&] { monte_carlo_level(spec, 50, 40, 3, 1.5, 1); }) == errc::invalid_spec);
  CHECK(code_of([&] { monte_carlo_level(spec, 5, 40, 5, 0.05, 1); }) == errc::invalid_degrees);
  CHECK(code_of([&] { monte_carlo_power(spec, 50, 40, 3, 0.05, 1); }) == errc::invalid_spec);
  ModelSpec shifted = spec;
  shifted.mean_shift = {ShiftKind::quadratic, 1.0};
  CHECK(code_of([&] { monte_carlo_level(shifted, 50, 40, 3, 0.05, 1); }) == errc::invalid_spec);
}

TEST_CASE("singular-Q replicates are counted, not dropped", "[simulate]") {
  // n = 3 with slope and intercept: d = 2 puts both grid points on a Q that is
  // singular for every sample (residuals live in a 1-dimensional space).
  const auto report = monte_carlo_level(ModelSpec::uniform_with_intercept(), 3, 20, 2, 0.05, 4);
  CHECK(report.failures == 20);
  CHECK(report.rejection_rate == 0.0);
}

TEST_CASE("reports do not depend on the thread count", "[simulate]") {
  const ModelSpec spec = ModelSpec::uniform_with_intercept();
  const auto a = monte_carlo_level(spec, 80, 200, 3, 0.2, 11, 1);
  const auto b = monte_carlo_level(spec, 80, 200, 3, 0.2, 11, 4);
  CHECK(a.rejection_rate == b.rejection_rate);
  CHECK(a.standard_error == b.standard_error);
  const Vector grid{0.25, 0.5, 0.75};
  CHECK(empirical_bridge_covariance(spec, 60, 150, grid, 3, 1) == empirical_bridge_covariance(spec, 60, 150, grid, 3, 3));
}

TEST_CASE("empirical bridge covariance", "[simulate][montecarlo]") {
  const Matrix single = empirical_bridge_covariance(ModelSpec::uniform_with_intercept(), 30, 1, Vector{0.5}, 1);
  CHECK(single(0, 0) == 0.0);

  const Matrix bb = empirical_bridge_covariance(ModelSpec::intercept_only(), 1000, 20000, Vector{0.5}, 2024);
  CHECK(std::abs(bb(0, 0) - 0.25) < 0.01);

  const Matrix c3 = empirical_bridge_covariance(ModelSpec::uniform_with_intercept(), 1000, 20000, Vector{0.5}, 2025);
  CHECK(std::abs(c3(0, 0) - 0.0625) < 0.01);

  CHECK(code_of([] { empirical_bridge_covariance(ModelSpec::intercept_only(), 10, 5, Vector{0.0, 0.5}, 1); }) ==
        errc::invalid_spec);
}

TEST_CASE("unnormalized process covariance matches the theorem 1 kernel", "[simulate][montecarlo]") {
  ModelSpec spec = no_intercept_uniform();
  spec.noise = Noise::uniform;
  const auto report = empirical_covariance(spec, 500, 8000, Vector{0.25, 0.5, 0.75, 0.95}, 8, ProcessKind::unnormalized);
  CHECK(report.max_abs_deviation < 0.02);

  ModelSpec ext = ModelSpec::intercept_only();
  ext.covariates = {{0.5, 2.0, 0.3}};
  ext.theta = {1.5, -1.0};
  const auto bridge_report = empirical_covariance(ext, 500, 8000, Vector{0.2, 0.5, 0.8}, 9);
  CHECK(bridge_report.max_abs_deviation < 0.015);
}

TEST_CASE("sample_limit_vector", "[simulate]") {
  const TheoreticalKernel k = bridge_kernel(ModelSpec::uniform_with_intercept());
  const Vector grid{0.5};
  const LimitSampler sampler(k, grid);
  double ss = 0.0;
  const int draws = 40000;
  for (int r = 0; r < draws; ++r) {
    const double v = sampler.draw(replicate_seed(17, r))[0];
    ss += v * v;
  }
  CHECK(std::abs(ss / draws - 0.0625) < 0.003);
  CHECK(sample_limit_vector(k, grid, 5) == sample_limit_vector(k, grid, 5));

  try {
    (void)sample_limit_vector(k, Vector{0.0, 0.5}, 1);
    FAIL("grid containing 0 accepted");
  } catch (const error& e) {
    CHECK(e.code() == errc::not_positive_definite);
  }
}
