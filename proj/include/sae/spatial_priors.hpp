#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sae/car_precision.hpp"
#include "sae/rng.hpp"

namespace sae {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct CarSample {
  Eigen::MatrixXd values;        // N x n_draws, one draw per column
  std::vector<double> rho_used;  // per draw
};

/// Draws x = sigma * L^{-T} e so that Cov(x) = sigma2 * Q(rho)^{-1}.
CarSample sample_car(const CarStructure& structure, double rho, double sigma2,
                     std::size_t n_draws, Rng& rng);

struct SeparableSample {
  std::vector<Eigen::MatrixXd> phi;  // per draw, N x K
  std::vector<Eigen::MatrixXd> psi;  // per draw, N x K spatial factor
  Eigen::MatrixXd sigma;             // K x K
  Eigen::MatrixXd chol;              // lower L, sigma = L L^T
};

/// Lower Cholesky factor; throws Error{SigmaNotPD}.
Eigen::MatrixXd response_cholesky(const Eigen::MatrixXd& sigma);

/// psi has K independent CAR(rho) columns; phi = psi L^T, so vec of the
/// row-major phi has covariance Q^{-1} kron Sigma.
SeparableSample sample_separable(const CarStructure& structure, double rho,
                                 const Eigen::MatrixXd& sigma, std::size_t n_draws, Rng& rng);

struct GmcarParams {
  double sigma1_sq = 1.0;
  double sigma2_sq = 1.0;
  double rho1 = 0.5;
  double rho2 = 0.5;
  double eta0 = 0.0;
  double eta1 = 0.0;
};

struct GmcarSample {
  Eigen::MatrixXd phi1;  // N x n_draws
  Eigen::MatrixXd phi2;  // N x n_draws
  GmcarParams params;
};

/// y = (eta0 I + eta1 W) x; the bridge matrix is never formed.
void bridge_multiply(const RegionGraph& graph, double eta0, double eta1,
                     std::span<const double> x, std::span<double> y);

/// phi2 ~ CAR(rho2, sigma2_sq); phi1 = A phi2 + CAR(rho1, sigma1_sq).
GmcarSample sample_gmcar(const CarStructure& structure, const GmcarParams& params,
                         std::size_t n_draws, Rng& rng);

/// log N(x | 0, sigma2 Q(rho)^{-1}).
double car_logpdf(const CarStructure& structure, double rho, double sigma2,
                  std::span<const double> x);
/// Same, reusing an existing factorization.
double car_logpdf(const CarStructure& structure, const CarFactor& factor, double sigma2,
                  std::span<const double> x);

/// log p(phi2) + log p(phi1 - A phi2).
double gmcar_logpdf(const CarStructure& structure, const GmcarParams& params,
                    std::span<const double> phi1, std::span<const double> phi2);

/// Matrix-normal MN(0, Q(rho)^{-1}, Sigma) log-density of an N x K phi:
/// -(NK/2) log 2pi + (K/2) log|Q| - (N/2) log|Sigma| - tr(Sigma^{-1} phi^T Q phi) / 2.
double separable_logpdf(const CarStructure& structure, double rho, const Eigen::MatrixXd& sigma,
                        const Eigen::MatrixXd& phi);

enum class TrainingLayout : std::uint8_t { Univariate = 0, Vectorized = 1 };

std::string to_string(TrainingLayout layout);
TrainingLayout parse_layout(const std::string& text);

struct TrainingSet {
  TrainingLayout layout = TrainingLayout::Univariate;
  std::size_t n_regions = 0;
  std::size_t k = 1;
  RowMatrix samples;        // n_samples x (N * K); vectorized rows are [col_1 | ... | col_K]
  std::vector<double> rho;  // per sample
  std::string graph_hash;
  std::uint64_t seed = 0;

  std::size_t dim() const noexcept { return n_regions * k; }
  std::size_t n_samples() const noexcept { return static_cast<std::size_t>(samples.rows()); }
};

/// Per sample: rho ~ Unif(0,1), then K unit-scale CAR columns sharing rho.
TrainingSet generate_training_set(const CarStructure& structure, std::size_t n_samples,
                                  TrainingLayout layout, std::size_t k, std::uint64_t seed);

/// Binary file: "SAETRAIN", u32 version, u8 layout, u64 N, u64 K, u64 n_samples,
/// row-major f64 samples, then n_samples f64 rho values; all little-endian.
/// A sidecar `<path>.json` records graph hash and seed.
void save_training_set(const TrainingSet& set, const std::string& path);
TrainingSet load_training_set(const std::string& path);

}  // namespace sae
