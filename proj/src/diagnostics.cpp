#include "sae/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <unsupported/Eigen/FFT>

#include "sae/error.hpp"

namespace sae {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance_of(std::span<const double> x, double mean) {
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return s / static_cast<double>(x.size() - 1);
}

// Biased autocovariance at lags 0..n-1 through a zero-padded FFT.
std::vector<double> autocovariance(std::span<const double> x) {
  const std::size_t n = x.size();
  std::size_t m = 1;
  while (m < 2 * n) m <<= 1;
  const double mean = mean_of(x);
  std::vector<double> padded(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) padded[i] = x[i] - mean;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> freq;
  fft.fwd(freq, padded);
  for (auto& f : freq) f = std::norm(f);
  std::vector<double> back;
  fft.inv(back, freq);
  std::vector<double> acov(n);
  for (std::size_t t = 0; t < n; ++t) acov[t] = back[t] / static_cast<double>(n);
  return acov;
}

void check_chains(std::span<const std::vector<double>> chains) {
  if (chains.size() < 2) throw Error(ErrorKind::TooFewDraws, "need at least 2 chains");
  const std::size_t n = chains.front().size();
  if (n < 4) throw Error(ErrorKind::TooFewDraws, "chains are too short");
  for (const auto& c : chains) {
    if (c.size() != n) throw Error(ErrorKind::ShapeMismatch, "chains differ in length");
  }
}

}  // namespace

double split_rhat(std::span<const std::vector<double>> chains) {
  check_chains(chains);
  const std::size_t half = chains.front().size() / 2;
  const std::size_t skip = chains.front().size() % 2;
  std::vector<std::span<const double>> parts;
  for (const auto& c : chains) {
    parts.emplace_back(c.data(), half);
    parts.emplace_back(c.data() + half + skip, half);
  }
  const double n = static_cast<double>(half);
  const double m = static_cast<double>(parts.size());
  std::vector<double> means;
  double w = 0.0;
  for (auto p : parts) {
    means.push_back(mean_of(p));
    w += variance_of(p, means.back());
  }
  w /= m;
  const double grand = mean_of(means);
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= n / (m - 1.0);
  if (!(w > 0.0)) return kNaN;
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

double effective_sample_size(std::span<const std::vector<double>> chains) {
  check_chains(chains);
  const std::size_t n = chains.front().size();
  const double nd = static_cast<double>(n);
  const double m = static_cast<double>(chains.size());
  std::vector<std::vector<double>> acov;
  std::vector<double> means;
  for (const auto& c : chains) {
    acov.push_back(autocovariance(c));
    means.push_back(mean_of(c));
  }
  double w = 0.0;
  for (const auto& a : acov) w += a[0] * nd / (nd - 1.0);
  w /= m;
  const double grand = mean_of(means);
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= nd / (m - 1.0);
  const double var_plus = (nd - 1.0) / nd * w + b / nd;
  if (!(w > 0.0) || !(var_plus > 0.0)) return kNaN;

  auto rho = [&](std::size_t t) {
    double s = 0.0;
    for (const auto& a : acov) s += a[t];
    return 1.0 - (w - s / m) / var_plus;
  };
  // Geyer: sum of adjacent pairs while positive, forced monotone.
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    double pair = rho(t) + rho(t + 1);
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  const double total = m * nd;
  return std::min(total, total / std::max(tau, 1.0 / std::log10(total)));
}

double ChainDiagnostics::max_rhat() const {
  double r = 0.0;
  for (const auto& b : blocks) {
    if (!std::isnan(b.max_rhat)) r = std::max(r, b.max_rhat);
  }
  return r;
}

ChainDiagnostics diagnose(const PosteriorDraws& draws) {
  if (draws.n_chains < 2 || draws.n_kept < 100) {
    throw Error(ErrorKind::TooFewDraws, "diagnostics need >= 2 chains and >= 100 kept draws, got " +
                                            std::to_string(draws.n_chains) + " x " +
                                            std::to_string(draws.n_kept));
  }
  ChainDiagnostics out;
  out.rhat.resize(draws.dim);
  out.ess.resize(draws.dim);
  out.degenerate.resize(draws.dim);
  std::vector<std::vector<double>> chains(draws.n_chains);
  for (std::size_t j = 0; j < draws.dim; ++j) {
    for (std::size_t c = 0; c < draws.n_chains; ++c) chains[c] = draws.trace(c, j);
    out.rhat[j] = split_rhat(chains);
    out.ess[j] = effective_sample_size(chains);
    out.degenerate[j] = std::isnan(out.rhat[j]);
  }
  for (const auto& blk : draws.blocks) {
    BlockDiagnostics bd;
    bd.name = blk.name;
    bd.max_rhat = 0.0;
    bd.min_ess = std::numeric_limits<double>::infinity();
    for (std::size_t j = blk.offset; j < blk.offset + blk.size; ++j) {
      if (out.degenerate[j]) {
        ++bd.degenerate;
        continue;
      }
      bd.max_rhat = std::max(bd.max_rhat, out.rhat[j]);
      bd.min_ess = std::min(bd.min_ess, out.ess[j]);
    }
    if (bd.degenerate == blk.size) bd.max_rhat = bd.min_ess = kNaN;
    out.blocks.push_back(bd);
  }
  out.mean_acceptance = mean_of(draws.acceptance);
  out.divergences = draws.total_divergences();
  return out;
}

}  // namespace sae
