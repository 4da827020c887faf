#pragma once

#include <cstdint>
#include <string>

#include "sae/autodiff.hpp"
#include "sae/region_graph.hpp"
#include "sae/spatial_priors.hpp"

namespace sae {

class VaeModel;

struct DecoderMetadata {
  std::string graph_hash;
  TrainingLayout layout = TrainingLayout::Univariate;
  std::size_t n_regions = 0;
  std::size_t k = 1;
  std::uint64_t training_seed = 0;
  std::size_t n_samples = 0;
  double final_elbo = 0.0;
};

/// Frozen generator z (batch x J) -> psi (batch x dim). Immutable; decode and
/// the forward/backward pair are safe to call concurrently.
class Decoder {
 public:
  Decoder(ad::Tensor w1, ad::Tensor b1, ad::Tensor wout, ad::Tensor bout, DecoderMetadata meta);
  static Decoder from_model(const VaeModel& model, DecoderMetadata meta);

  std::size_t latent_dim() const noexcept { return w1_.rows(); }
  std::size_t hidden_dim() const noexcept { return w1_.cols(); }
  std::size_t output_dim() const noexcept { return wout_.cols(); }
  const DecoderMetadata& metadata() const noexcept { return meta_; }

  ad::Tensor decode(const ad::Tensor& z) const;

  /// Forward pass retained for a pullback. `z` must outlive the pass.
  class Pass {
   public:
    ad::TensorView value() const { return tape_.value(); }

   private:
    friend class Decoder;
    Pass(ad::Graph graph, ad::Graph::Tape tape) : graph_(std::move(graph)), tape_(std::move(tape)) {}
    ad::Graph graph_;
    ad::Graph::Tape tape_;
  };
  Pass forward(ad::TensorView z) const;
  /// d<seed, psi>/dz for the pass.
  ad::Tensor backward(const Pass& pass, const ad::Tensor& seed) const;

  /// Throws Error{HashMismatch} when trained on another graph, and
  /// Error{InvalidConfig} for a layout or K mismatch.
  void check_compatible(const RegionGraph& graph, TrainingLayout layout, std::size_t k) const;

  const ad::Tensor& w1() const noexcept { return w1_; }
  const ad::Tensor& b1() const noexcept { return b1_; }
  const ad::Tensor& wout() const noexcept { return wout_; }
  const ad::Tensor& bout() const noexcept { return bout_; }

 private:
  ad::Tensor w1_, b1_, wout_, bout_;
  DecoderMetadata meta_;
};

/// One JSON header line (version, dims, layout, graph SHA-256, seed, metrics,
/// payload size, CRC-32), then the little-endian f64 weights w1, b1, w_out, b_out.
void save_decoder(const Decoder& decoder, const std::string& path);
/// Throws Error{VersionUnsupported|CorruptFile|Io}.
Decoder load_decoder(const std::string& path);

}  // namespace sae
