#pragma once

#include <Eigen/Dense>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sae/diagnostics.hpp"
#include "sae/fh_models.hpp"
#include "sae/hmc.hpp"

namespace sae {

struct FitResult {
  PosteriorDraws draws;
  std::optional<ChainDiagnostics> diagnostics;  // absent with < 2 chains or < 100 draws
  std::vector<std::string> warnings;
  double seconds = 0.0;
};

/// Samples the target and computes diagnostics. A warning is recorded when
/// any block R-hat exceeds 1.05.
FitResult fit(const FhTarget& target, const HmcConfig& config);

/// Builds the target first (so HashMismatch and friends surface before sampling).
FitResult fit(const ModelSpec& spec, const DirectEstimateTable& data, const RegionGraph& graph,
              std::shared_ptr<const Decoder> decoder, const HmcConfig& config);

/// Per-cell posterior summaries of theta and of exp(theta).
struct ThetaSummary {
  std::vector<std::string> region_ids;
  std::vector<std::string> responses;
  Eigen::MatrixXd mean, sd, q025, q975;
  Eigen::MatrixXd mean_orig, sd_orig, q025_orig, q975_orig;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> interpolated;  // cell had no direct estimate
};

ThetaSummary summarize_theta(const FhTarget& target, const PosteriorDraws& draws);

/// Columns: region_id, response, mean, sd, q025, q975, mean_orig, sd_orig,
/// q025_orig, q975_orig, interpolated.
void write_theta_summary_csv(std::ostream& out, const ThetaSummary& summary);

/// Linear-interpolation sample quantile (values are reordered).
double sample_quantile(std::vector<double>& values, double prob);

}  // namespace sae
