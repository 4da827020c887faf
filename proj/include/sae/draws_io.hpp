#pragma once

#include <string>

#include "sae/diagnostics.hpp"
#include "sae/hmc.hpp"

namespace sae {

/// Columnar file: magic, version, chains, kept draws, dimension, the block
/// table, per-chain sampler statistics, then one column of n_chains * n_kept
/// little-endian doubles per coordinate.
void save_draws(const PosteriorDraws& draws, const std::string& path);
/// Throws Error{Io|CorruptFile|VersionUnsupported}.
PosteriorDraws load_draws(const std::string& path);

/// Diagnostics as JSON (per block plus sampler statistics).
std::string diagnostics_json(const ChainDiagnostics& diag, const PosteriorDraws& draws);
void save_diagnostics(const ChainDiagnostics& diag, const PosteriorDraws& draws,
                      const std::string& path);

}  // namespace sae
