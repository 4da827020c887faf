#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "sae/error.hpp"
#include "sae/fit.hpp"
#include "sae/harness.hpp"
#include "sae/study.hpp"

using namespace sae;

namespace {

HmcConfig quick(std::uint64_t seed, std::size_t iterations = 2000) {
  HmcConfig c;
  c.seed = seed;
  c.n_iterations = iterations;
  c.n_burnin = iterations / 2;
  return c;
}

double posterior_mean(const PosteriorDraws& d, std::size_t j, double* sd = nullptr) {
  double s = 0.0, ss = 0.0;
  const double n = static_cast<double>(d.n_chains * d.n_kept);
  for (std::size_t c = 0; c < d.n_chains; ++c)
    for (std::size_t t = 0; t < d.n_kept; ++t) s += d.value(c, t, j);
  const double m = s / n;
  for (std::size_t c = 0; c < d.n_chains; ++c)
    for (std::size_t t = 0; t < d.n_kept; ++t) ss += std::pow(d.value(c, t, j) - m, 2);
  if (sd) *sd = std::sqrt(ss / (n - 1));
  return m;
}

}  // namespace

TEST_CASE("FH recovers the generating coefficients") {
  const RegionGraph g = RegionGraph::lattice(5, 6);
  Rng rng(21);
  DirectEstimateTable t;
  t.region_ids = g.ids();
  t.responses = {"v"};
  t.covariates = {"intercept", "x1"};
  t.x.resize(30, 2);
  t.y.resize(30, 1);
  t.gamma.resize(30, 1);
  for (Eigen::Index i = 0; i < 30; ++i) {
    t.x(i, 0) = 1.0;
    t.x(i, 1) = standard_normal(rng);
    const double theta = 1.0 + 0.5 * t.x(i, 1) + 0.5 * standard_normal(rng);
    t.gamma(i, 0) = 0.2 + 0.3 * uniform01(rng);
    t.y(i, 0) = theta + t.gamma(i, 0) * standard_normal(rng);
  }
  const FitResult r = fit(ModelSpec{}, t, g, nullptr, quick(3));
  REQUIRE(r.diagnostics.has_value());
  CHECK(r.diagnostics->max_rhat() < 1.05);
  const FhTarget target = build_target(ModelSpec{}, t, g);
  const std::size_t off = target.block("beta").offset;
  double sd0 = 0.0, sd1 = 0.0;
  const double b0 = posterior_mean(r.draws, off, &sd0);
  const double b1 = posterior_mean(r.draws, off + 1, &sd1);
  CHECK(std::abs(b0 - 1.0) < 3.0 * sd0);
  CHECK(std::abs(b1 - 0.5) < 3.0 * sd1);
  CHECK(r.seconds > 0.0);
}

TEST_CASE("tiny sampling error pins theta to the direct estimate") {
  const RegionGraph g = RegionGraph::lattice(3, 3);
  DirectEstimateTable t = testing::random_table(g, 1, 5);
  t.gamma(4, 0) = 1e-6;
  const FhTarget target = build_target(ModelSpec{}, t, g);
  const FitResult r = fit(target, quick(4, 1000));
  const ThetaSummary s = summarize_theta(target, r.draws);
  CHECK(std::abs(s.mean(4, 0) - t.y(4, 0)) < 1e-3);
}

TEST_CASE("summaries are ordered, finite and flag interpolated cells") {
  const RegionGraph g = RegionGraph::lattice(3, 4);
  const DirectEstimateTable t = testing::random_table(g, 2, 6, 0.2);
  ModelSpec spec;
  spec.kind = ModelKind::GMS;
  spec.k = 2;
  const FhTarget target = build_target(spec, t, g);
  const FitResult r = fit(target, quick(5, 600));
  const ThetaSummary s = summarize_theta(target, r.draws);
  for (Eigen::Index i = 0; i < s.mean.rows(); ++i) {
    for (Eigen::Index k = 0; k < 2; ++k) {
      CHECK(std::isfinite(s.mean(i, k)));
      CHECK(s.q025(i, k) <= s.mean(i, k));
      CHECK(s.mean(i, k) <= s.q975(i, k));
      CHECK(s.q025_orig(i, k) <= s.q975_orig(i, k));
      CHECK(s.q025_orig(i, k) == doctest::Approx(std::exp(s.q025(i, k))).epsilon(1e-9));
      CHECK(s.mean_orig(i, k) >= std::exp(s.mean(i, k)) * (1 - 1e-12));  // Jensen
      CHECK(s.interpolated(i, k) == !t.observed(static_cast<std::size_t>(i), static_cast<std::size_t>(k)));
    }
  }
  std::ostringstream out;
  write_theta_summary_csv(out, s);
  const std::string csv = out.str();
  CHECK(csv.rfind("region_id,response,mean,sd,q025,q975,mean_orig,sd_orig,q025_orig,q975_orig,interpolated\n", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == 1 + 12 * 2);
}

TEST_CASE("decoder from another graph fails before sampling") {
  const RegionGraph g = RegionGraph::lattice(3, 3);
  const auto wrong = testing::random_decoder(RegionGraph::lattice(3, 4), TrainingLayout::Univariate, 1, 1);
  ModelSpec spec;
  spec.kind = ModelKind::VGMS;
  spec.k = 2;
  try {
    fit(spec, testing::random_table(g, 2, 7), g, wrong, quick(1));
    FAIL("expected HashMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::HashMismatch);
  }
}

TEST_CASE("VGMS on a 10x10 lattice runs at default settings without divergences") {
  // direct estimates simulated from a GMCAR truth, as in the lattice study
  SimulationConfig sc;
  sc.seed = 1;
  const StudyTruth truth = make_truth(sc);
  Rng rng = make_rng(sc.seed, 77);
  DirectEstimateTable t;
  t.region_ids = truth.graph.ids();
  t.responses = truth.responses;
  t.covariates = truth.covariates;
  t.x = truth.x;
  t.gamma = truth.gamma;
  t.y = simulate_direct(truth.theta, truth.gamma, rng);
  ModelSpec spec;
  spec.kind = ModelKind::VGMS;
  spec.k = 2;
  const auto dec = testing::random_decoder(truth.graph, TrainingLayout::Univariate, 1, 2);
  HmcConfig cfg;
  cfg.seed = 8;
  const FitResult r = fit(spec, t, truth.graph, dec, cfg);
  CHECK(r.draws.n_kept == 10000);
  CHECK(r.draws.total_divergences() == 0);
}

TEST_CASE("sample quantiles interpolate linearly") {
  std::vector<double> v{4.0, 1.0, 3.0, 2.0, 5.0};
  CHECK(sample_quantile(v, 0.0) == 1.0);
  CHECK(sample_quantile(v, 1.0) == 5.0);
  CHECK(sample_quantile(v, 0.5) == 3.0);
  CHECK(sample_quantile(v, 0.125) == doctest::Approx(1.5));
}
