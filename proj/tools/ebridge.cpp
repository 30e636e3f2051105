// ebridge: command-line front end.
//
//   ebridge test --input data.csv --order-by x --response y [--d 3] ...
//   ebridge simulate level|covariance|power [model flags] --n 500 --reps 1000 ...
//
// Exit status: 0 success, 1 statistically degenerate data (singular design,
// perfect fit, singular Q), 2 invalid input or flags.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ebridge/ebridge.hpp"

namespace {

using ebridge::errc;
using ebridge::error;
namespace sim = ebridge::simulate;

constexpr int exit_degenerate = 1;
constexpr int exit_input = 2;

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw error(errc::invalid_spec, what + ": '" + item + "' is not a number");
    }
  }
  return out;
}

std::vector<std::string> parse_names(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

// "uniform:a,b", "normal:mu,sd", "exponential:rate"
sim::Distribution parse_distribution(const std::string& text) {
  const auto colon = text.find(':');
  const std::string family = text.substr(0, colon);
  const std::vector<double> p =
      colon == std::string::npos ? std::vector<double>{} : parse_numbers(text.substr(colon + 1), "--dist");
  auto need = [&](std::size_t k) {
    if (p.size() != k) throw error(errc::invalid_spec, "--dist " + family + " takes " + std::to_string(k) + " parameters");
  };
  if (family == "uniform") {
    if (p.empty()) return sim::Distribution::uniform(0.0, 1.0);
    need(2);
    return sim::Distribution::uniform(p[0], p[1]);
  }
  if (family == "normal") {
    if (p.empty()) return sim::Distribution::normal(0.0, 1.0);
    need(2);
    return sim::Distribution::normal(p[0], p[1]);
  }
  if (family == "exponential") {
    if (p.empty()) return sim::Distribution::exponential(1.0);
    need(1);
    return sim::Distribution::exponential(p[0]);
  }
  throw error(errc::unsupported_spec, "covariate distribution '" + family + "' has no quantile form");
}

// "quadratic:c" or "changepoint:c"
sim::MeanShift parse_shift(const std::string& text) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  double magnitude = 1.0;
  if (colon != std::string::npos) {
    const auto v = parse_numbers(text.substr(colon + 1), "--shift");
    if (v.size() != 1) throw error(errc::invalid_spec, "--shift takes one magnitude");
    magnitude = v[0];
  }
  if (kind == "none") return {};
  if (kind == "quadratic") return {sim::ShiftKind::quadratic, magnitude};
  if (kind == "changepoint") return {sim::ShiftKind::change_point, magnitude};
  throw error(errc::invalid_spec, "unknown shift '" + kind + "'");
}

sim::Noise parse_noise(const std::string& text) {
  if (text == "normal") return sim::Noise::normal;
  if (text == "uniform") return sim::Noise::uniform;
  if (text == "t5") return sim::Noise::student_t5;
  throw error(errc::invalid_spec, "unknown noise family '" + text + "'");
}

struct TestOptions {
  std::string input;
  std::string order_by = "none";
  std::string response = "y";
  std::string covariates = "all-remaining";
  bool no_intercept = false;
  std::size_t d = ebridge::chisq::default_degrees;
  double alpha = 0.05;
  std::string emit_bridge;
  std::string output = "json";
};

int cmd_test(const TestOptions& opt) {
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw error(errc::invalid_spec, "--alpha must lie in (0,1)");
  ebridge::io::ColumnSelection sel;
  sel.response = opt.response;
  if (opt.order_by != "none") sel.order_by = opt.order_by;
  if (opt.covariates != "all-remaining") sel.covariates = parse_names(opt.covariates);

  const auto ingested = ebridge::io::ingest_csv(opt.input, sel);
  if (ingested.ordering.kind == ebridge::chisq::Ordering::Kind::none)
    std::cerr << "note: --order-by none, rows are taken in file order\n";
  const auto result = ebridge::chisq::run_test(ingested.dataset, opt.d, !opt.no_intercept, ingested.ordering);

  if (!opt.emit_bridge.empty()) {
    std::ofstream out(opt.emit_bridge);
    if (!out) throw error(errc::io_error, "cannot write '" + opt.emit_bridge + "'");
    ebridge::io::write_bridge_tsv(out, result.bridge);
  }
  if (opt.output == "text")
    ebridge::io::write_text(std::cout, result, opt.alpha);
  else
    std::cout << ebridge::io::to_json(result).dump(2) << '\n';
  return 0;
}

struct SimOptions {
  std::string kind = "covariate";
  std::string dist = "uniform:0,1";
  std::vector<std::string> covariates;
  std::string noise = "normal";
  double noise_sd = 1.0;
  std::string theta;
  bool no_intercept = false;
  std::string shift = "none";
  std::size_t n = 500;
  std::size_t reps = 1000;
  std::size_t d = ebridge::chisq::default_degrees;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  std::string grid;
  std::string process = "bridge";
};

sim::ModelSpec build_spec(const SimOptions& opt) {
  sim::ModelSpec spec;
  if (opt.kind == "covariate") {
    spec.kind = sim::OrderKind::covariate;
    spec.covariate_dist = parse_distribution(opt.dist);
  } else if (opt.kind == "external") {
    spec.kind = sim::OrderKind::external;
    for (const auto& c : opt.covariates) {
      const auto p = parse_numbers(c, "--covariate");
      if (p.size() != 3) throw error(errc::invalid_spec, "--covariate takes intercept,slope,spread");
      spec.covariates.push_back({p[0], p[1], p[2]});
    }
  } else {
    throw error(errc::invalid_spec, "--kind must be covariate or external");
  }
  spec.noise = parse_noise(opt.noise);
  spec.noise_sd = opt.noise_sd;
  spec.intercept = !opt.no_intercept;
  spec.mean_shift = parse_shift(opt.shift);
  if (opt.theta.empty()) {
    spec.theta.assign(spec.covariate_count(), 1.0);
    if (spec.intercept) spec.theta.push_back(0.0);
  } else {
    spec.theta = parse_numbers(opt.theta, "--theta");
  }
  spec.validate();
  return spec;
}

int cmd_simulate(const std::string& mode, const SimOptions& opt) {
  const sim::ModelSpec spec = build_spec(opt);
  nlohmann::json report;
  if (mode == "level") {
    report = ebridge::io::to_json(sim::monte_carlo_level(spec, opt.n, opt.reps, opt.d, opt.alpha, opt.seed));
  } else if (mode == "power") {
    report = ebridge::io::to_json(sim::monte_carlo_power(spec, opt.n, opt.reps, opt.d, opt.alpha, opt.seed));
  } else {
    const auto grid = opt.grid.empty() ? ebridge::chisq::grid_points(opt.d) : parse_numbers(opt.grid, "--grid");
    sim::ProcessKind process = sim::ProcessKind::bridge;
    if (opt.process == "unnormalized")
      process = sim::ProcessKind::unnormalized;
    else if (opt.process != "bridge")
      throw error(errc::invalid_spec, "--process must be bridge or unnormalized");
    report = ebridge::io::to_json(sim::empirical_covariance(spec, opt.n, opt.reps, grid, opt.seed, process));
  }
  std::cout << report.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bridge goodness-of-fit test for regression on induced order statistics"};
  app.require_subcommand(1);

  TestOptions topt;
  auto* test = app.add_subcommand("test", "Run the chi-square bridge test on a CSV file");
  test->add_option("--input", topt.input, "CSV file with a header row")->required();
  test->add_option("--order-by", topt.order_by, "Ordering column, or 'none' if rows are already ordered")
      ->capture_default_str();
  test->add_option("--response", topt.response, "Response column")->capture_default_str();
  test->add_option("--covariates", topt.covariates,
                   "Comma-separated covariates; list the ordering column to keep it in the design")
      ->capture_default_str();
  test->add_flag("--no-intercept", topt.no_intercept, "Do not append an intercept column");
  test->add_option("--d", topt.d, "Number of grid points (degrees of freedom)")->capture_default_str();
  test->add_option("--alpha", topt.alpha, "Significance level for the text report")->capture_default_str();
  test->add_option("--emit-bridge", topt.emit_bridge, "Write the bridge path as TSV");
  test->add_option("--output", topt.output, "json or text")
      ->check(CLI::IsMember({"json", "text"}))
      ->capture_default_str();

  SimOptions sopt;
  std::string mode;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo experiments under a synthetic model");
  simulate->add_option("mode", mode, "level, covariance or power")
      ->required()
      ->check(CLI::IsMember({"level", "covariance", "power"}));
  simulate->add_option("--kind", sopt.kind, "covariate (order by the covariate) or external (hidden uniform key)")
      ->capture_default_str();
  simulate->add_option("--dist", sopt.dist, "Ordering covariate law: uniform:a,b normal:mu,sd exponential:rate")
      ->capture_default_str();
  simulate->add_option("--covariate", sopt.covariates, "External-kind covariate intercept,slope,spread (repeatable)");
  simulate->add_option("--noise", sopt.noise, "normal, uniform or t5 (scaled to --noise-sd)")->capture_default_str();
  simulate->add_option("--noise-sd", sopt.noise_sd, "Error standard deviation")->capture_default_str();
  simulate->add_option("--theta", sopt.theta, "True coefficients, intercept last");
  simulate->add_flag("--no-intercept", sopt.no_intercept, "Model without intercept");
  simulate->add_option("--shift", sopt.shift, "Mean shift: none, quadratic:c, changepoint:c")->capture_default_str();
  simulate->add_option("--n", sopt.n, "Sample size")->capture_default_str();
  simulate->add_option("--reps", sopt.reps, "Monte Carlo replicates")->capture_default_str();
  simulate->add_option("--d", sopt.d, "Degrees of freedom")->capture_default_str();
  simulate->add_option("--alpha", sopt.alpha, "Significance level")->capture_default_str();
  simulate->add_option("--seed", sopt.seed, "Base seed")->capture_default_str();
  simulate->add_option("--grid", sopt.grid, "Covariance grid, comma-separated (default i/(d+1))");
  simulate->add_option("--process", sopt.process, "Covariance target: bridge or unnormalized")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_input;
  }

  try {
    if (*test) return cmd_test(topt);
    if (mode == "power" && sopt.shift == "none") sopt.shift = "quadratic:2";
    return cmd_simulate(mode, sopt);
  } catch (const error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ebridge::is_statistical(e.code()) ? exit_degenerate : exit_input;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_input;
  }
}
