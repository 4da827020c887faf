#pragma once

#include "sae/autodiff.hpp"

namespace sae::detail {

struct DecoderWeights {
  ad::Expr w1, b1, wout, bout;
};

inline ad::Expr decoder_expr(ad::Graph& g, ad::Expr z, const DecoderWeights& w) {
  const ad::Expr h = g.elu(g.row_broadcast_add(g.matmul(z, w.w1), w.b1));
  return g.row_broadcast_add(g.matmul(h, w.wout), w.bout);
}

inline DecoderWeights decoder_inputs(ad::Graph& g, std::size_t latent, std::size_t hidden,
                                     std::size_t output) {
  return {g.input("dec_w1", latent, hidden), g.input("dec_b1", 1, hidden),
          g.input("dec_wout", hidden, output), g.input("dec_bout", 1, output)};
}

}  // namespace sae::detail
