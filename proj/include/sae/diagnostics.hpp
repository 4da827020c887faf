#pragma once

#include <span>
#include <string>
#include <vector>

#include "sae/hmc.hpp"

namespace sae {

/// Split R-hat over chains of equal length. NaN when the pooled within-chain
/// variance is zero (constant draws).
double split_rhat(std::span<const std::vector<double>> chains);

/// Multi-chain effective sample size from autocorrelations truncated by
/// Geyer's initial monotone sequence; capped at the total draw count. NaN
/// for constant draws.
double effective_sample_size(std::span<const std::vector<double>> chains);

struct BlockDiagnostics {
  std::string name;
  double max_rhat = 0.0;  // over non-degenerate coordinates; NaN if none
  double min_ess = 0.0;
  std::size_t degenerate = 0;  // coordinates with constant draws
};

struct ChainDiagnostics {
  std::vector<double> rhat;  // per coordinate (NaN when degenerate)
  std::vector<double> ess;
  std::vector<bool> degenerate;
  std::vector<BlockDiagnostics> blocks;
  double mean_acceptance = 0.0;
  std::size_t divergences = 0;

  /// Largest block R-hat, ignoring degenerate blocks.
  double max_rhat() const;
};

/// Throws Error{TooFewDraws} with fewer than 2 chains or 100 kept draws.
ChainDiagnostics diagnose(const PosteriorDraws& draws);

}  // namespace sae
