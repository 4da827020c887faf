#include "sae/fit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>

#include "sae/error.hpp"

namespace sae {

FitResult fit(const FhTarget& target, const HmcConfig& config) {
  FitResult result;
  const auto start = std::chrono::steady_clock::now();
  result.draws = run_hmc(target, config);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (result.draws.n_chains >= 2 && result.draws.n_kept >= 100) {
    result.diagnostics = diagnose(result.draws);
    for (const auto& b : result.diagnostics->blocks) {
      if (b.max_rhat > 1.05) {
        result.warnings.push_back("block " + b.name + " has R-hat " + std::to_string(b.max_rhat));
      }
    }
  } else {
    result.warnings.push_back("too few chains or draws for convergence diagnostics");
  }
  return result;
}

FitResult fit(const ModelSpec& spec, const DirectEstimateTable& data, const RegionGraph& graph,
              std::shared_ptr<const Decoder> decoder, const HmcConfig& config) {
  const FhTarget target = build_target(spec, data, graph, std::move(decoder));
  return fit(target, config);
}

double sample_quantile(std::vector<double>& values, double prob) {
  if (values.empty()) throw Error(ErrorKind::TooFewDraws, "quantile of no draws");
  const double h = prob * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double a = values[lo];
  if (lo + 1 >= values.size()) return a;
  const double b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
  return a + (h - static_cast<double>(lo)) * (b - a);
}

ThetaSummary summarize_theta(const FhTarget& target, const PosteriorDraws& draws) {
  const auto& data = target.data();
  const Eigen::Index n = static_cast<Eigen::Index>(data.n_regions());
  const Eigen::Index k = static_cast<Eigen::Index>(data.n_responses());
  const std::size_t total = draws.n_chains * draws.n_kept;
  if (total == 0) throw Error(ErrorKind::TooFewDraws, "no posterior draws to summarize");
  if (draws.dim != target.dimension()) {
    throw Error(ErrorKind::ShapeMismatch, "draws do not belong to this model");
  }
  const std::size_t cells = static_cast<std::size_t>(n * k);
  std::vector<double> all(cells * total);  // cell-major
  std::size_t d = 0;
  for (std::size_t c = 0; c < draws.n_chains; ++c) {
    for (std::size_t t = 0; t < draws.n_kept; ++t, ++d) {
      const Eigen::MatrixXd th = target.theta(draws.draw(c, t));
      for (std::size_t cell = 0; cell < cells; ++cell) all[cell * total + d] = th.data()[cell];
    }
  }
  ThetaSummary s;
  s.region_ids = data.region_ids;
  s.responses = data.responses;
  for (auto* m : {&s.mean, &s.sd, &s.q025, &s.q975, &s.mean_orig, &s.sd_orig, &s.q025_orig, &s.q975_orig}) {
    m->resize(n, k);
  }
  s.interpolated.resize(n, k);
  std::vector<double> v(total), e(total);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    std::copy(all.begin() + static_cast<std::ptrdiff_t>(cell * total),
              all.begin() + static_cast<std::ptrdiff_t>((cell + 1) * total), v.begin());
    for (std::size_t i = 0; i < total; ++i) e[i] = std::exp(v[i]);
    auto moments = [&](const std::vector<double>& x, double& mean, double& sd) {
      double m = 0.0;
      for (double a : x) m += a;
      m /= static_cast<double>(x.size());
      double ss = 0.0;
      for (double a : x) ss += (a - m) * (a - m);
      mean = m;
      sd = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1)) : 0.0;
    };
    const Eigen::Index i = static_cast<Eigen::Index>(cell) % n;
    const Eigen::Index kk = static_cast<Eigen::Index>(cell) / n;
    moments(v, s.mean(i, kk), s.sd(i, kk));
    moments(e, s.mean_orig(i, kk), s.sd_orig(i, kk));
    s.q025(i, kk) = sample_quantile(v, 0.025);
    s.q975(i, kk) = sample_quantile(v, 0.975);
    // quantiles commute with the monotone exp
    s.q025_orig(i, kk) = std::exp(s.q025(i, kk));
    s.q975_orig(i, kk) = std::exp(s.q975(i, kk));
    s.interpolated(i, kk) = std::isnan(data.y(i, kk));
  }
  return s;
}

void write_theta_summary_csv(std::ostream& out, const ThetaSummary& s) {
  out << "region_id,response,mean,sd,q025,q975,mean_orig,sd_orig,q025_orig,q975_orig,interpolated\n";
  out << std::setprecision(17);
  for (Eigen::Index k = 0; k < s.mean.cols(); ++k) {
    for (Eigen::Index i = 0; i < s.mean.rows(); ++i) {
      out << s.region_ids[static_cast<std::size_t>(i)] << ',' << s.responses[static_cast<std::size_t>(k)] << ','
          << s.mean(i, k) << ',' << s.sd(i, k) << ',' << s.q025(i, k) << ',' << s.q975(i, k) << ','
          << s.mean_orig(i, k) << ',' << s.sd_orig(i, k) << ',' << s.q025_orig(i, k) << ','
          << s.q975_orig(i, k) << ',' << (s.interpolated(i, k) ? "true" : "false") << '\n';
    }
  }
}

}  // namespace sae
