#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sae/autodiff.hpp"
#include "sae/rng.hpp"
#include "sae/spatial_priors.hpp"

namespace sae {

/// Encoder: x -> ELU(x W1 + b1) -> (mu, logvar) heads. Decoder:
/// z -> ELU(z W1' + b1') W_out + b_out with a linear output layer.
class VaeModel {
 public:
  /// input_dim = hidden_dim = latent_dim, alpha = 1 / latent_dim.
  static VaeModel init(std::size_t input_dim, std::uint64_t seed);
  static VaeModel init(std::size_t input_dim, std::size_t hidden_dim, std::size_t latent_dim,
                       std::uint64_t seed);

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t hidden_dim() const noexcept { return hidden_dim_; }
  std::size_t latent_dim() const noexcept { return latent_dim_; }
  double alpha() const noexcept { return alpha_; }
  void set_alpha(double alpha);

  /// Parameter tensors by name: enc_w1, enc_b1, enc_wmu, enc_bmu, enc_wlv,
  /// enc_blv, dec_w1, dec_b1, dec_wout, dec_bout.
  const std::map<std::string, ad::Tensor>& parameters() const noexcept { return params_; }
  std::map<std::string, ad::Tensor>& parameters() noexcept { return params_; }
  static const std::vector<std::string>& parameter_names();

 private:
  std::size_t input_dim_ = 0;
  std::size_t hidden_dim_ = 0;
  std::size_t latent_dim_ = 0;
  double alpha_ = 1.0;
  std::map<std::string, ad::Tensor> params_;
};

inline constexpr double kLogvarClamp = 30.0;

struct Encoding {
  ad::Tensor mu;      // batch x J
  ad::Tensor logvar;  // batch x J, clamped to [-30, 30]
};

Encoding encode(const VaeModel& model, const ad::Tensor& x);

/// z = mu + exp(logvar / 2) * eps with eps ~ N(0, I); logvar is clamped first.
ad::Tensor reparameterize(const ad::Tensor& mu, const ad::Tensor& logvar, Rng& rng);

ad::Tensor decode(const VaeModel& model, const ad::Tensor& z);

struct ElboValue {
  double elbo = 0.0;   // batch mean of recon - alpha * kl
  double kl = 0.0;     // batch mean closed-form KL(q || N(0, I)), >= 0
  double recon = 0.0;  // batch mean Gaussian log-likelihood, averaged over L draws
};

/// L Monte Carlo draws of the reconstruction term; noise comes from rng.
ElboValue elbo(const VaeModel& model, const ad::Tensor& batch, Rng& rng, std::size_t draws = 1);

/// Same with caller-supplied noise (one batch x J tensor per draw).
ElboValue elbo_with_noise(const VaeModel& model, const ad::Tensor& batch,
                          const std::vector<ad::Tensor>& noise);

/// Graph of the batch-mean ELBO with every parameter, `x` and `eps<l>` as
/// inputs; exposed for gradient testing.
struct ElboGraph {
  ad::Graph graph;
  ad::Expr elbo;
  ad::Expr kl;
  ad::Expr recon;
};
ElboGraph build_elbo_graph(std::size_t batch, std::size_t input_dim, std::size_t hidden_dim,
                           std::size_t latent_dim, double alpha, std::size_t draws);

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::size_t patience = 25;
  std::size_t moving_average_window = 20;
  /// Per-epoch multiplicative learning-rate decay (1 keeps it constant).
  /// With a constant rate the 20-epoch moving-average ELBO still dips from
  /// minibatch noise late in training.
  double lr_decay = 0.98;
  std::size_t mc_draws = 1;
  /// Applies calibrate_latent to the returned model.
  bool calibrate_latent = true;
  bool verbose = false;
};

struct ElboTrace {
  std::vector<double> elbo;   // per epoch, full-data mean with fixed evaluation noise
  std::vector<double> kl;
  std::vector<double> recon;
  std::size_t best_epoch = 0;
  bool stopped_early = false;

  std::size_t size() const noexcept { return elbo.size(); }
  /// Trailing moving average of the ELBO (shorter windows at the start).
  std::vector<double> moving_average(std::size_t window) const;
};

struct TrainResult {
  VaeModel model;  // best-ELBO snapshot
  ElboTrace trace;
};

/// Re-expresses the latent space so the encoder's aggregate posterior over
/// `data` has zero mean and identity covariance. With S = Cov(mu) + E[sigma^2]
/// = L L^T and m = E[mu], the decoder becomes z -> f(m + z L^T) and the mean
/// head maps to (mu - m) L^-T; the log-variance head is left as trained.
/// Small alpha leaves the KL pull toward N(0, I) weak, so without this the
/// decoder under z ~ N(0, I) sees a latent law it was not trained on.
void calibrate_latent(VaeModel& model, const TrainingSet& data);

/// Adam ascent on the ELBO over shuffled mini-batches with early stopping on
/// the moving-average ELBO. Throws Error{DimMismatch|NonFiniteLoss}.
TrainResult train(const VaeModel& initial, const TrainingSet& data, const TrainConfig& config);

}  // namespace sae
