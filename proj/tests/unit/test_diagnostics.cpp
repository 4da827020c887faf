#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "sae/diagnostics.hpp"
#include "sae/draws_io.hpp"
#include "sae/error.hpp"
#include "sae/hmc.hpp"

using namespace sae;

namespace {

std::vector<std::vector<double>> iid_chains(std::size_t chains, std::size_t n, Rng& rng,
                                            std::vector<double> means = {}) {
  std::vector<std::vector<double>> out(chains, std::vector<double>(n));
  for (std::size_t c = 0; c < chains; ++c) {
    for (double& v : out[c]) v = (means.empty() ? 0.0 : means[c]) + standard_normal(rng);
  }
  return out;
}

PosteriorDraws make_draws(std::size_t chains, std::size_t kept, std::size_t dim, Rng& rng) {
  PosteriorDraws d;
  d.n_chains = chains;
  d.n_kept = kept;
  d.dim = dim;
  d.values.resize(chains * kept * dim);
  for (double& v : d.values) v = standard_normal(rng);
  d.blocks = {{"a", 0, 1}, {"b", 1, dim - 1}};
  d.acceptance.assign(chains, 0.8);
  d.step_size.assign(chains, 0.3);
  d.divergences.assign(chains, 0);
  d.leapfrog_steps.assign(chains, 100);
  return d;
}

}  // namespace

TEST_CASE("i.i.d. chains have R-hat near one and ESS near the draw count") {
  Rng rng(1);
  const auto chains = iid_chains(4, 2000, rng);
  CHECK(split_rhat(chains) < 1.01);
  CHECK(split_rhat(chains) > 1.0 - 1e-3);
  const double ess = effective_sample_size(chains);
  CHECK(ess > 6000.0);
  CHECK(ess <= 8000.0);
}

TEST_CASE("disagreeing chains have large R-hat") {
  Rng rng(2);
  CHECK(split_rhat(iid_chains(2, 1000, rng, {0.0, 10.0})) > 2.0);
}

TEST_CASE("autocorrelated chains have reduced ESS") {
  Rng rng(3);
  std::vector<std::vector<double>> chains(2, std::vector<double>(4000));
  for (auto& c : chains) {
    double x = 0.0;
    for (double& v : c) v = x = 0.9 * x + std::sqrt(1 - 0.81) * standard_normal(rng);
  }
  // AR(1) with phi = 0.9: ESS / n = (1 - phi) / (1 + phi) ~ 0.053
  const double ess = effective_sample_size(chains);
  CHECK(ess > 0.03 * 8000);
  CHECK(ess < 0.09 * 8000);
}

TEST_CASE("constant chains are degenerate") {
  const std::vector<std::vector<double>> chains(3, std::vector<double>(200, 1.5));
  CHECK(std::isnan(split_rhat(chains)));
  Rng rng(4);
  PosteriorDraws d = make_draws(2, 200, 3, rng);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < 200; ++t) d.values[(c * 200 + t) * 3] = 2.0;
  const ChainDiagnostics diag = diagnose(d);
  CHECK(diag.degenerate[0]);
  CHECK_FALSE(diag.degenerate[1]);
  CHECK(diag.blocks[0].name == "a");
  CHECK(diag.blocks[0].degenerate == 1);
  CHECK(std::isnan(diag.blocks[0].max_rhat));
  CHECK(std::isfinite(diag.max_rhat()));
}

TEST_CASE("too few draws") {
  Rng rng(5);
  try {
    diagnose(make_draws(1, 500, 2, rng));
    FAIL("expected TooFewDraws");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TooFewDraws);
  }
  CHECK_THROWS_AS(diagnose(make_draws(2, 99, 2, rng)), Error);
}

TEST_CASE("draws file round-trips exactly") {
  Rng rng(6);
  const PosteriorDraws d = make_draws(3, 150, 4, rng);
  const std::string path = "draws_roundtrip.bin";
  save_draws(d, path);
  const PosteriorDraws back = load_draws(path);
  CHECK(back.values == d.values);
  CHECK(back.n_chains == 3);
  CHECK(back.n_kept == 150);
  CHECK(back.blocks.size() == 2);
  CHECK(back.blocks[1].name == "b");
  CHECK(back.blocks[1].size == 3);
  CHECK(back.acceptance == d.acceptance);
  CHECK(back.step_size == d.step_size);
  CHECK(back.leapfrog_steps == d.leapfrog_steps);

  {
    std::FILE* f = std::fopen(path.c_str(), "ab");
    std::fputc(0, f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_draws(path), Error);
  std::remove(path.c_str());

  const std::string js = diagnostics_json(diagnose(d), d);
  CHECK(js.find("\"rhat\"") != std::string::npos);
  CHECK(js.find("\"b\"") != std::string::npos);
}
