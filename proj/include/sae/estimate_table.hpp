#pragma once

#include <Eigen/Dense>
#include <istream>
#include <string>
#include <vector>

#include "sae/region_graph.hpp"

namespace sae {

/// Direct estimates aligned with a RegionGraph. Missing cells hold NaN in
/// both y and gamma.
struct DirectEstimateTable {
  std::vector<std::string> region_ids;
  std::vector<std::string> responses;
  std::vector<std::string> covariates;
  Eigen::MatrixXd y;      // N x K
  Eigen::MatrixXd gamma;  // N x K sampling standard errors
  Eigen::MatrixXd x;      // N x P

  std::size_t n_regions() const noexcept { return static_cast<std::size_t>(y.rows()); }
  std::size_t n_responses() const noexcept { return static_cast<std::size_t>(y.cols()); }
  std::size_t n_covariates() const noexcept { return static_cast<std::size_t>(x.cols()); }
  bool observed(std::size_t i, std::size_t k) const {
    return !std::isnan(y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
  }
  std::size_t n_observed() const;

  /// Throws Error{ShapeMismatch|NonPositiveScale|SingularDesign}.
  void validate() const;
};

/// Prepends an intercept column unless some column is already all ones.
void ensure_intercept(DirectEstimateTable& table);

struct CsvOptions {
  double moe_level = 0.90;     // for moe_<name> columns
  bool log_transform = false;  // delta-method log of y and se
  /// Drop rows whose region is not in the graph (after largest-component
  /// extraction) instead of failing.
  bool skip_unknown_regions = false;
};

/// Schema: region_id, y_<name>, se_<name> | moe_<name>, ..., x_<cov>, ...
/// Empty y/se fields mark a missing cell. Rows are reordered to match the
/// graph; every graph region needs a row. Throws Error{Parse|ShapeMismatch|
/// NonPositiveScale|NonPositiveEstimate|SingularDesign}.
DirectEstimateTable read_estimate_csv(std::istream& in, const RegionGraph& graph,
                                      const CsvOptions& options = {});
DirectEstimateTable read_estimate_csv_file(const std::string& path, const RegionGraph& graph,
                                           const CsvOptions& options = {});

/// Writes the table back in the same schema (se columns, no intercept).
void write_estimate_csv(std::ostream& out, const DirectEstimateTable& table);

/// Splits one CSV record; double quotes group fields containing commas.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace sae
