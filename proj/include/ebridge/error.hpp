#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ebridge {

enum class errc {
  not_positive_definite,
  not_symmetric,
  dimension_mismatch,
  invalid_dataset,
  missing_order_key,
  rank_deficient,
  degenerate_residuals,
  out_of_domain,
  invalid_degrees,
  singular_covariance,
  invalid_spec,
  unsupported_spec,
  io_error,
  parse_error,
  non_numeric_field,
  duplicate_column,
  unknown_column,
};

constexpr std::string_view to_string(errc code) noexcept {
  switch (code) {
    case errc::not_positive_definite: return "NotPositiveDefinite";
    case errc::not_symmetric: return "NotSymmetric";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::invalid_dataset: return "InvalidDataset";
    case errc::missing_order_key: return "MissingOrderKey";
    case errc::rank_deficient: return "RankDeficient";
    case errc::degenerate_residuals: return "DegenerateResiduals";
    case errc::out_of_domain: return "OutOfDomain";
    case errc::invalid_degrees: return "InvalidDegrees";
    case errc::singular_covariance: return "SingularCovariance";
    case errc::invalid_spec: return "InvalidSpec";
    case errc::unsupported_spec: return "UnsupportedSpec";
    case errc::io_error: return "IoError";
    case errc::parse_error: return "ParseError";
    case errc::non_numeric_field: return "NonNumericField";
    case errc::duplicate_column: return "DuplicateColumn";
    case errc::unknown_column: return "UnknownColumn";
  }
  return "Unknown";
}

/// True for failures caused by the data being statistically degenerate
/// (singular design, perfect fit, singular Q) rather than malformed input.
constexpr bool is_statistical(errc code) noexcept {
  switch (code) {
    case errc::not_positive_definite:
    case errc::rank_deficient:
    case errc::degenerate_residuals:
    case errc::singular_covariance:
      return true;
    default:
      return false;
  }
}

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] errc code() const noexcept { return code_; }

 private:
  errc code_;
};

}  // namespace ebridge
