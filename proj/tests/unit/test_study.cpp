#include <doctest.h>

#include <cmath>
#include <json.hpp>

#include "sae/error.hpp"
#include "sae/study.hpp"

using namespace sae;

namespace {

ErrorKind parse_error(const std::string& text) {
  try {
    parse_simulation_config(text);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Parse;
}

SimulationConfig small_fh_study() {
  return parse_simulation_config(R"({
    "seed": 5, "n_replicates": 2, "models": ["fh"],
    "truth": {"rows": 4, "cols": 4, "k": 2},
    "hmc": {"iterations": 400, "burnin": 200, "chains": 2}
  })");
}

}  // namespace

TEST_CASE("configuration parsing") {
  const SimulationConfig c = parse_simulation_config(R"({
    "seed": 9, "n_replicates": 3, "models": ["FH", "gms-fh", "vgms"], "missing_fraction": 0.1,
    "truth": {"rows": 6, "cols": 5, "k": 2, "beta": [[1, 2], [3, 4]], "rho1": 0.3, "eta1": 0.05,
              "gamma_range": [0.1, 0.2]},
    "hmc": {"iterations": 100, "burnin": 50, "chains": 3, "target_accept": 0.7},
    "training": {"samples": 500, "epochs": 7, "seed": 4}
  })");
  CHECK(c.seed == 9);
  CHECK(c.n_replicates == 3);
  CHECK(c.models == std::vector<ModelKind>{ModelKind::FH, ModelKind::GMS, ModelKind::VGMS});
  CHECK(c.missing_fraction == 0.1);
  CHECK(c.truth.rows == 6);
  CHECK(c.truth.beta(1, 0) == 2.0);
  CHECK(c.truth.beta(0, 1) == 3.0);
  CHECK(c.truth.spatial.rho1 == 0.3);
  CHECK(c.truth.spatial.eta1 == 0.05);
  CHECK(c.truth.gamma_low == 0.1);
  CHECK(c.hmc.n_chains == 3);
  CHECK(c.hmc.target_accept == 0.7);
  CHECK(c.training_samples == 500);
  CHECK(c.training.epochs == 7);
  CHECK(c.training.seed == 4);

  CHECK(parse_error(R"({"sed": 1})") == ErrorKind::InvalidConfig);
  CHECK(parse_error(R"({"truth": {"rows": 3, "colz": 3}})") == ErrorKind::InvalidConfig);
  CHECK(parse_error(R"({"n_replicates": 0})") == ErrorKind::InvalidConfig);
  CHECK(parse_error(R"({"models": ["nope"]})") == ErrorKind::InvalidConfig);
  CHECK(parse_error(R"({"hmc": {"iterations": 10, "burnin": 20}})") == ErrorKind::InvalidConfig);
  CHECK(parse_error("not json") == ErrorKind::InvalidConfig);
  CHECK(parse_error(R"({"truth": {"k": 3}, "models": ["gms"]})") == ErrorKind::InvalidConfig);
}

TEST_CASE("synthetic truth") {
  SimulationConfig c = small_fh_study();
  const StudyTruth t = make_truth(c);
  CHECK(t.graph.size() == 16);
  CHECK(t.theta.rows() == 16);
  CHECK(t.theta.cols() == 2);
  CHECK(t.x.col(0).isOnes());
  CHECK(t.gamma.minCoeff() >= c.truth.gamma_low);
  CHECK(t.gamma.maxCoeff() <= c.truth.gamma_high);
  CHECK(make_truth(c).theta == t.theta);
  c.seed = 6;
  CHECK(make_truth(c).theta != t.theta);
}

TEST_CASE("single-replicate FH study") {
  SimulationConfig c = small_fh_study();
  c.n_replicates = 1;
  const MetricsReport r = run_study(c);
  REQUIRE(r.estimators.size() == 2);
  CHECK(r.estimators[0].name == "direct");
  const EstimatorMetrics& fh = r.at("FH");
  CHECK(fh.failures.empty());
  REQUIRE(fh.rmse.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(std::isfinite(fh.rmse[k]));
    CHECK(fh.rmse[k] >= 0.0);
    CHECK(fh.interval_score[k] >= 0.0);
    CHECK(fh.coverage[k] >= 0.0);
    CHECK(fh.coverage[k] <= 1.0);
  }
  CHECK(fh.seconds.size() == 1);
  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j.contains("estimators"));
  const std::string csv = r.to_csv();
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 2);
  CHECK_THROWS_AS(r.at("VGMS-FH"), Error);
}

TEST_CASE("fixed seed gives a bit-identical report") {
  SimulationConfig c = small_fh_study();
  c.missing_fraction = 0.1;
  const std::string a = run_study(c).to_json(false);
  const std::string b = run_study(c).to_json(false);
  CHECK(a == b);
  c.workers = 2;
  CHECK(run_study(c).to_json(false) == a);
  c.seed = 99;
  CHECK(run_study(c).to_json(false) != a);
}

TEST_CASE("masked cells are scored against a column-mean baseline") {
  SimulationConfig c = small_fh_study();
  c.missing_fraction = 0.2;
  const MetricsReport r = run_study(c);
  const EstimatorMetrics& fh = r.at("FH");
  CHECK(fh.masked_rmse_raw.size() == 2);
  CHECK(fh.column_mean_rmse_raw.size() == 2);
  for (double v : fh.masked_rmse_raw) CHECK(std::isfinite(v));
}
