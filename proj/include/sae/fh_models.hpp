#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sae/car_precision.hpp"
#include "sae/decoder_artifact.hpp"
#include "sae/estimate_table.hpp"
#include "sae/hmc.hpp"

namespace sae {

enum class ModelKind { FH, SMS, GMS, VSMS, VGMS };

std::string to_string(ModelKind kind);
/// Accepts fh, sms, gms, vsms, vgms (any case, optional "-fh" suffix).
ModelKind parse_model_kind(const std::string& text);
bool is_variational(ModelKind kind);
bool is_gmcar(ModelKind kind);

struct PriorSpec {
  double beta_variance = 100.0;
  double ig_shape = 0.001;  // tau^2 and the GMCAR scales
  double ig_scale = 0.001;
  double eta_variance = 100.0;
  /// Inverse-Wishart degrees of freedom; 0 means K + 1. Scale is identity.
  double iw_dof = 0.0;
};

struct ModelSpec {
  ModelKind kind = ModelKind::FH;
  std::size_t k = 1;
  PriorSpec priors;
  /// Response index modelled marginally (phi_2) in the GMCAR kinds.
  std::size_t gmcar_phi2 = 1;
  /// VSMS only: phi = sigma * psi with one scale instead of psi L^T.
  bool scalar_scale = false;

  /// Throws Error{KMismatch|InvalidConfig}.
  void validate() const;
};

/// Constrained view of one parameter vector. Fields that a kind does not use
/// are left empty or at their defaults.
struct LatentState {
  Eigen::MatrixXd beta;  // P x K
  Eigen::VectorXd tau2;  // K
  Eigen::MatrixXd u;     // N x K; theta = X beta + phi + tau * u
  // separable kinds
  double rho = 0.5;
  Eigen::MatrixXd sigma;  // K x K
  double scale_sq = 1.0;  // VSMS scalar-scale variant
  // GMCAR kinds, phi_1 = A phi_2 + sigma_1 psi_1
  double rho1 = 0.5, rho2 = 0.5;
  double sigma1_sq = 1.0, sigma2_sq = 1.0;
  double eta0 = 0.0, eta1 = 0.0;
  Eigen::MatrixXd phi;  // N x K, full-rank kinds
  Eigen::MatrixXd z;    // VSMS: 1 x NK; VGMS: 2 x N (rows for psi_1, psi_2)
};

/// Additive pieces of the log posterior.
struct DensityParts {
  double likelihood = 0.0;   // observed cells only
  double theta_prior = 0.0;  // standard normal on u (the theta | phi prior after rescaling)
  double phi_block = 0.0;    // phi or z density plus priors/Jacobians of rho, eta, sigma_i^2
  double shared = 0.0;       // beta, tau^2 and Sigma (or scale) priors with Jacobians

  double total() const { return likelihood + theta_prior + phi_block + shared; }
};

/// Log posterior of one model over its unconstrained parameter vector.
class FhTarget final : public TargetDensity {
 public:
  std::size_t dimension() const override { return dim_; }
  double log_density(std::span<const double> q) const override;
  double log_density_gradient(std::span<const double> q, std::span<double> grad) const override;
  std::vector<ParameterBlock> blocks() const override { return blocks_; }
  /// Least-squares beta, residual-based tau^2, zero spatial effects.
  std::vector<double> initial_point() const override;

  DensityParts parts(std::span<const double> q) const;

  LatentState unpack(std::span<const double> q) const;
  std::vector<double> pack(const LatentState& state) const;

  /// phi (N x K) and theta (N x K) at q.
  Eigen::MatrixXd phi(std::span<const double> q) const;
  Eigen::MatrixXd theta(std::span<const double> q) const;

  const ModelSpec& spec() const noexcept { return spec_; }
  const DirectEstimateTable& data() const noexcept { return data_; }
  const CarStructure& structure() const noexcept { return *structure_; }
  /// Offset of a named block; throws Error{InvalidConfig} if absent.
  const ParameterBlock& block(const std::string& name) const;

 private:
  friend FhTarget build_target(const ModelSpec&, const DirectEstimateTable&, const RegionGraph&,
                               std::shared_ptr<const Decoder>);
  FhTarget() = default;
  double evaluate(std::span<const double> q, double* grad, DensityParts* parts) const;

  ModelSpec spec_;
  DirectEstimateTable data_;
  std::shared_ptr<const CarStructure> structure_;
  std::shared_ptr<const Decoder> decoder_;
  std::vector<ParameterBlock> blocks_;
  std::size_t dim_ = 0;
  std::size_t n_ = 0, p_ = 0, k_ = 0;
  std::size_t phi1_col_ = 0, phi2_col_ = 1;  // GMCAR response columns
  // block offsets
  std::size_t o_beta_ = 0, o_tau_ = 0, o_u_ = 0, o_rho_ = 0, o_chol_ = 0, o_scale_ = 0;
  std::size_t o_gmcar_ = 0, o_phi_ = 0, o_z_ = 0;
};

/// Throws Error{KMismatch|HashMismatch|InvalidConfig|SingularDesign}.
FhTarget build_target(const ModelSpec& spec, const DirectEstimateTable& data,
                      const RegionGraph& graph, std::shared_ptr<const Decoder> decoder = nullptr);

}  // namespace sae
