#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ebridge/bridge.hpp"
#include "ebridge/chisq_test.hpp"
#include "ebridge/error.hpp"
#include "ebridge/linalg.hpp"
#include "ebridge/model.hpp"
#include "ebridge/simulate.hpp"

namespace ebridge::io {

using linalg::Matrix;
using linalg::Vector;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// CSV

/// Numeric CSV: comma separated, header row required, '.' decimal point.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<Vector> columns;

  [[nodiscard]] std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }

  [[nodiscard]] std::size_t index_of(std::string_view name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw error(errc::unknown_column, "no column named '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::optional<double> parse_number(std::string_view field) {
  if (field.empty()) return std::nullopt;
  if (field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Reads a numeric table. Row numbers in errors are 1-based file lines.
inline CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw error(errc::parse_error, "line 1: missing header row");
  for (auto name : detail::split(line)) {
    if (name.empty()) throw error(errc::parse_error, "line 1: empty column name");
    if (std::find(table.header.begin(), table.header.end(), name) != table.header.end())
      throw error(errc::duplicate_column, "line 1: column '" + std::string(name) + "' appears twice");
    table.header.emplace_back(name);
  }
  table.columns.resize(table.header.size());

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line);
    if (fields.size() != table.header.size())
      throw error(errc::parse_error, "line " + std::to_string(line_no) + ": expected " +
                                         std::to_string(table.header.size()) + " fields, found " +
                                         std::to_string(fields.size()));
    for (std::size_t j = 0; j < fields.size(); ++j) {
      const auto v = detail::parse_number(fields[j]);
      if (!v)
        throw error(errc::non_numeric_field, "line " + std::to_string(line_no) + ", column '" + table.header[j] +
                                                 "': '" + std::string(fields[j]) + "' is not a finite number");
      table.columns[j].push_back(*v);
    }
  }
  return table;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw error(errc::io_error, "cannot open '" + path + "'");
  return read_csv(in);
}

/// Which CSV columns play which role.
struct ColumnSelection {
  std::string response = "y";
  /// Ordering column, or nullopt to take rows in file order.
  std::optional<std::string> order_by;
  /// Explicit covariates, or nullopt for every column other than the response
  /// and the ordering column. Listing the ordering column here keeps it in the
  /// design (ordering by a covariate); otherwise it is an external key.
  std::optional<std::vector<std::string>> covariates;
};

struct Ingested {
  model::Dataset dataset;
  chisq::Ordering ordering;
  std::vector<std::string> covariate_names;
};

inline Ingested to_dataset(const CsvTable& table, const ColumnSelection& sel) {
  const std::size_t response = table.index_of(sel.response);
  std::optional<std::size_t> order;
  if (sel.order_by) {
    order = table.index_of(*sel.order_by);
    if (*order == response) throw error(errc::invalid_dataset, "the response cannot be the ordering column");
  }

  std::vector<std::string> names;
  if (sel.covariates) {
    for (const auto& name : *sel.covariates) {
      if (table.index_of(name) == response)
        throw error(errc::invalid_dataset, "the response cannot also be a covariate");
      if (std::find(names.begin(), names.end(), name) != names.end())
        throw error(errc::duplicate_column, "covariate '" + name + "' listed twice");
      names.push_back(name);
    }
  } else {
    for (std::size_t j = 0; j < table.header.size(); ++j)
      if (j != response && (!order || j != *order)) names.push_back(table.header[j]);
  }

  const std::size_t n = table.rows();
  Matrix x(n, names.size());
  chisq::Ordering ordering = chisq::Ordering::as_given();
  for (std::size_t j = 0; j < names.size(); ++j) {
    const std::size_t src = table.index_of(names[j]);
    if (order && src == *order) ordering = chisq::Ordering::by_column(j);
    for (std::size_t i = 0; i < n; ++i) x(i, j) = table.columns[src][i];
  }
  std::optional<Vector> key;
  if (order && ordering.kind == chisq::Ordering::Kind::none) {
    key = table.columns[*order];
    ordering = chisq::Ordering::by_key();
  }
  return {model::Dataset(std::move(x), table.columns[response], std::move(key)), ordering, std::move(names)};
}

inline Ingested ingest_csv(const std::string& path, const ColumnSelection& sel) {
  return to_dataset(read_csv_file(path), sel);
}

/// Writes key (if present, as `key_name`), covariates and response with 17
/// significant digits so that re-reading reproduces every double exactly.
inline void write_csv(std::ostream& out, const model::Dataset& d, const std::vector<std::string>& covariate_names,
                      const std::string& response_name = "y", const std::string& key_name = "key") {
  if (covariate_names.size() != d.m()) throw error(errc::dimension_mismatch, "one name per covariate required");
  std::vector<std::string> header;
  if (d.order_key()) header.push_back(key_name);
  header.insert(header.end(), covariate_names.begin(), covariate_names.end());
  header.push_back(response_name);
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  for (std::size_t i = 0; i < d.n(); ++i) {
    bool first = true;
    auto put = [&](double v) {
      out << (first ? "" : ",") << detail::format_double(v);
      first = false;
    };
    if (d.order_key()) put((*d.order_key())[i]);
    for (std::size_t j = 0; j < d.m(); ++j) put(d.x()(i, j));
    put(d.y()[i]);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Bridge path

/// Two tab-separated columns "t" and "z0", one row per node k/n.
inline void write_bridge_tsv(std::ostream& out, const bridge::BridgeProcess& b) {
  out << "t\tz0\n";
  const std::size_t n = b.n();
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(n);
    out << detail::format_double(t) << '\t' << detail::format_double(b.node_values()[k]) << '\n';
  }
}

// ---------------------------------------------------------------------------
// JSON

inline json matrix_rows(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    rows.push_back(Vector(r.begin(), r.end()));
  }
  return rows;
}

inline json to_json(const chisq::TestResult& r) {
  return json{{"n", r.n},
              {"m", r.m},
              {"d", r.d},
              {"grid", r.grid},
              {"q", r.q},
              {"Q", matrix_rows(r.q_matrix)},
              {"statistic", r.statistic},
              {"p_value", r.p_value},
              {"sigma_hat2", r.sigma_hat2},
              {"theta_hat", r.theta_hat}};
}

inline std::string_view family_name(simulate::Family f) {
  switch (f) {
    case simulate::Family::uniform: return "uniform";
    case simulate::Family::normal: return "normal";
    case simulate::Family::exponential: return "exponential";
  }
  return "";
}

inline std::string_view noise_name(simulate::Noise n) {
  switch (n) {
    case simulate::Noise::normal: return "normal";
    case simulate::Noise::uniform: return "uniform";
    case simulate::Noise::student_t5: return "t5";
  }
  return "";
}

inline std::string_view shift_name(simulate::ShiftKind s) {
  switch (s) {
    case simulate::ShiftKind::none: return "none";
    case simulate::ShiftKind::quadratic: return "quadratic";
    case simulate::ShiftKind::change_point: return "changepoint";
  }
  return "";
}

inline json to_json(const simulate::ModelSpec& s) {
  json j;
  j["kind"] = s.kind == simulate::OrderKind::covariate ? "covariate" : "external";
  if (s.kind == simulate::OrderKind::covariate) {
    Vector params{s.covariate_dist.p1};
    if (s.covariate_dist.family != simulate::Family::exponential) params.push_back(s.covariate_dist.p2);
    j["covariate_dist"] = json{{"family", family_name(s.covariate_dist.family)}, {"params", params}};
  } else {
    json cs = json::array();
    for (const auto& c : s.covariates)
      cs.push_back(json{{"intercept", c.intercept}, {"slope", c.slope}, {"spread", c.spread}});
    j["covariates"] = cs;
  }
  j["noise"] = noise_name(s.noise);
  j["noise_sd"] = s.noise_sd;
  j["theta"] = s.theta;
  j["intercept"] = s.intercept;
  j["mean_shift"] = json{{"kind", shift_name(s.mean_shift.kind)}, {"magnitude", s.mean_shift.magnitude}};
  return j;
}

inline json to_json(const simulate::RejectionReport& r) {
  return json{{"spec", to_json(r.spec)},
              {"n", r.n},
              {"reps", r.reps},
              {"d", r.d},
              {"alpha", r.alpha},
              {"rejection_rate", r.rejection_rate},
              {"standard_error", r.standard_error},
              {"failures", r.failures}};
}

inline json to_json(const simulate::CovarianceReport& r) {
  return json{{"spec", to_json(r.spec)},
              {"process", r.process == simulate::ProcessKind::bridge ? "bridge" : "unnormalized"},
              {"n", r.n},
              {"reps", r.reps},
              {"failures", r.failures},
              {"grid", r.grid},
              {"empirical", matrix_rows(r.empirical)},
              {"theoretical", matrix_rows(r.theoretical)},
              {"max_abs_deviation", r.max_abs_deviation}};
}

/// Aligned plain-text rendering of a test result.
inline void write_text(std::ostream& out, const chisq::TestResult& r, double alpha) {
  char buf[128];
  auto line = [&](const char* label, const std::string& value) {
    std::snprintf(buf, sizeof buf, "%-12s %s\n", label, value.c_str());
    out << buf;
  };
  auto num = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.6g", v);
    return std::string(b);
  };
  auto vec = [&](const Vector& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "  " : "") + num(v[i]);
    return s;
  };
  line("n", std::to_string(r.n));
  line("m", std::to_string(r.m));
  line("d", std::to_string(r.d));
  line("theta_hat", vec(r.theta_hat));
  line("sigma_hat2", num(r.sigma_hat2));
  line("grid", vec(r.grid));
  line("q", vec(r.q));
  for (std::size_t i = 0; i < r.q_matrix.rows(); ++i) {
    const auto row = r.q_matrix.row(i);
    line(i == 0 ? "Q" : "", vec(Vector(row.begin(), row.end())));
  }
  line("statistic", num(r.statistic));
  line("p_value", num(r.p_value));
  line("decision", r.p_value < alpha ? "reject linear model at alpha=" + num(alpha)
                                     : "no evidence against linear model at alpha=" + num(alpha));
}

}  // namespace ebridge::io
