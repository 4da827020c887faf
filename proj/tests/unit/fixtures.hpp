#pragma once

#include <cmath>
#include <memory>

#include "sae/decoder_artifact.hpp"
#include "sae/estimate_table.hpp"
#include "sae/region_graph.hpp"
#include "sae/rng.hpp"
#include "sae/vae.hpp"

namespace sae::testing {

/// Random estimate table on `graph` with an intercept and one covariate.
inline DirectEstimateTable random_table(const RegionGraph& graph, std::size_t k, std::uint64_t seed,
                                        double missing_fraction = 0.0) {
  Rng rng(seed);
  const auto n = static_cast<Eigen::Index>(graph.size());
  DirectEstimateTable t;
  t.region_ids = graph.ids();
  for (std::size_t r = 0; r < k; ++r) t.responses.push_back("r" + std::to_string(r));
  t.covariates = {"intercept", "x1"};
  t.x.resize(n, 2);
  t.y.resize(n, static_cast<Eigen::Index>(k));
  t.gamma.resize(n, static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    t.x(i, 0) = 1.0;
    t.x(i, 1) = standard_normal(rng);
    for (Eigen::Index c = 0; c < t.y.cols(); ++c) {
      t.y(i, c) = 1.0 + 0.5 * t.x(i, 1) + standard_normal(rng);
      t.gamma(i, c) = 0.2 + 0.3 * uniform01(rng);
      if (uniform01(rng) < missing_fraction) t.y(i, c) = t.gamma(i, c) = std::nan("");
    }
  }
  return t;
}

/// Untrained decoder bound to `graph` (random Glorot weights).
inline std::shared_ptr<const Decoder> random_decoder(const RegionGraph& graph, TrainingLayout layout,
                                                     std::size_t k, std::uint64_t seed) {
  const std::size_t dim = layout == TrainingLayout::Vectorized ? graph.size() * k : graph.size();
  VaeModel m = VaeModel::init(dim, seed);
  DecoderMetadata meta;
  meta.graph_hash = graph.content_hash();
  meta.layout = layout;
  meta.n_regions = graph.size();
  meta.k = layout == TrainingLayout::Vectorized ? k : 1;
  return std::make_shared<const Decoder>(Decoder::from_model(m, meta));
}

}  // namespace sae::testing
