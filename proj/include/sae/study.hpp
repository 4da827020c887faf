#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sae/decoder_artifact.hpp"
#include "sae/estimate_table.hpp"
#include "sae/fh_models.hpp"
#include "sae/hmc.hpp"
#include "sae/region_graph.hpp"
#include "sae/spatial_priors.hpp"
#include "sae/vae.hpp"

namespace sae {

/// Synthetic truth theta = X beta + phi with phi a GMCAR draw (K = 2) or a
/// CAR(rho2, sigma2_sq) draw (K = 1); X is an intercept plus standard-normal
/// covariates. gamma is uniform in gamma_range per cell.
struct SyntheticTruth {
  std::size_t rows = 10;
  std::size_t cols = 10;
  std::size_t k = 2;
  std::size_t n_covariates = 1;
  Eigen::MatrixXd beta;  // (1 + n_covariates) x K; defaults to intercept 1, slopes 0.5
  GmcarParams spatial{0.25, 0.25, 0.8, 0.8, 0.5, 0.1};
  double gamma_low = 0.15;
  double gamma_high = 0.35;
};

struct SimulationConfig {
  SyntheticTruth truth;
  /// Optional truth CSV (region_id, theta_<name>, gamma_<name>, x_<cov>) on
  /// `graph_file`; replaces the synthetic generator.
  std::string truth_file;
  std::string graph_file;
  std::size_t n_replicates = 20;
  std::vector<ModelKind> models{ModelKind::FH, ModelKind::VGMS};
  HmcConfig hmc;
  std::uint64_t seed = 1;
  double missing_fraction = 0.0;  // masked cells per replicate
  std::size_t workers = 1;        // replicates run concurrently
  std::size_t gmcar_phi2 = 1;
  /// Decoder artifacts by model; variational models without one get a
  /// decoder trained from `training` on the study graph.
  std::map<ModelKind, std::string> decoder_files;
  std::size_t training_samples = 10000;
  TrainConfig training;

  /// Throws Error{InvalidConfig}.
  void validate() const;
};

/// Reads the JSON schema documented in the README. Throws Error{InvalidConfig|Io}.
SimulationConfig load_simulation_config(const std::string& path);
SimulationConfig parse_simulation_config(const std::string& json_text);

struct StudyTruth {
  RegionGraph graph;
  Eigen::MatrixXd theta;  // N x K, log scale
  Eigen::MatrixXd gamma;  // N x K
  Eigen::MatrixXd x;      // N x P including the intercept
  std::vector<std::string> covariates;
  std::vector<std::string> responses;
};

StudyTruth make_truth(const SimulationConfig& config);

/// Metrics of one estimator (a model or the direct estimates) per response.
struct EstimatorMetrics {
  std::string name;
  // means over successful replicates, original scale
  std::vector<double> rmse, interval_score, coverage;
  std::vector<double> seconds;  // wall-clock per replicate
  // per replicate, per response
  std::vector<std::vector<double>> rmse_raw, interval_score_raw, coverage_raw;
  // masked-cell interpolation (only when cells are masked)
  std::vector<double> masked_rmse_raw, column_mean_rmse_raw;
  std::vector<std::string> failures;  // "replicate r: message"
  std::size_t divergences = 0;
  double max_rhat = 0.0;
};

struct MetricsReport {
  std::vector<std::string> responses;
  std::size_t n_replicates = 0;
  std::uint64_t seed = 0;
  std::vector<EstimatorMetrics> estimators;  // "direct" first, then the models in config order

  const EstimatorMetrics& at(const std::string& name) const;
  /// Wall-clock fields are omitted when include_timing is false, which
  /// makes the output a pure function of the configuration.
  std::string to_json(bool include_timing = true) const;
  /// One row per estimator and response: estimator, response, rmse,
  /// interval_score, coverage, seconds, replicates, failures.
  std::string to_csv(bool include_timing = true) const;
};

/// Simulates, fits and scores every replicate. Failed fits are recorded and skipped.
MetricsReport run_study(const SimulationConfig& config);
/// Same with decoders supplied by the caller (model -> decoder).
MetricsReport run_study(const SimulationConfig& config,
                        const std::map<ModelKind, std::shared_ptr<const Decoder>>& decoders);

/// Trains a decoder for `kind` on `graph` (vectorized layout for VSMS).
std::shared_ptr<const Decoder> train_decoder(const RegionGraph& graph, ModelKind kind, std::size_t k,
                                             std::size_t n_samples, const TrainConfig& config);

}  // namespace sae
