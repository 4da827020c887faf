#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "sae/error.hpp"
#include "sae/fh_models.hpp"
#include "sae/spatial_priors.hpp"
#include "sae/transforms.hpp"

using namespace sae;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

FhTarget make(ModelKind kind, const RegionGraph& g, std::size_t k, bool scalar = false,
              double missing = 0.1) {
  ModelSpec spec;
  spec.kind = kind;
  spec.k = k;
  spec.scalar_scale = scalar;
  std::shared_ptr<const Decoder> dec;
  if (kind == ModelKind::VSMS) dec = testing::random_decoder(g, TrainingLayout::Vectorized, k, 3);
  if (kind == ModelKind::VGMS) dec = testing::random_decoder(g, TrainingLayout::Univariate, 1, 3);
  return build_target(spec, testing::random_table(g, k, 11, missing), g, dec);
}

std::vector<double> random_point(const FhTarget& t, Rng& rng, double scale = 0.5) {
  std::vector<double> q = t.initial_point();
  for (double& v : q) v += scale * standard_normal(rng);
  return q;
}

}  // namespace

TEST_CASE("FH single-cell density is two standard normals at zero") {
  const RegionGraph g = RegionGraph::from_edge_list("a b\n");
  DirectEstimateTable t;
  t.region_ids = g.ids();
  t.responses = {"r"};
  t.covariates = {"intercept"};
  t.x = Eigen::MatrixXd::Ones(2, 1);
  t.y = Eigen::MatrixXd::Zero(2, 1);
  t.gamma = Eigen::MatrixXd::Ones(2, 1);
  t.y(1, 0) = t.gamma(1, 0) = std::nan("");
  ModelSpec spec;
  const FhTarget target = build_target(spec, t, g);
  LatentState s;
  s.beta = Eigen::MatrixXd::Zero(1, 1);
  s.tau2 = Eigen::VectorXd::Ones(1);
  s.u = Eigen::MatrixXd::Zero(2, 1);
  const DensityParts p = target.parts(target.pack(s));
  // the second (missing) region adds one more standard normal for its u
  CHECK(p.likelihood == doctest::Approx(-0.5 * kLog2Pi).epsilon(1e-14));
  CHECK(p.theta_prior == doctest::Approx(2 * -0.5 * kLog2Pi).epsilon(1e-14));
}

TEST_CASE("every kind: gradient matches central differences") {
  const RegionGraph g = RegionGraph::lattice(4, 5);
  Rng rng(5);
  struct Case {
    ModelKind kind;
    std::size_t k;
    bool scalar;
  };
  for (const Case c : {Case{ModelKind::FH, 1, false}, Case{ModelKind::FH, 2, false},
                       Case{ModelKind::SMS, 2, false}, Case{ModelKind::SMS, 1, false},
                       Case{ModelKind::GMS, 2, false}, Case{ModelKind::VSMS, 2, false},
                       Case{ModelKind::VSMS, 2, true}, Case{ModelKind::VGMS, 2, false}}) {
    CAPTURE(to_string(c.kind));
    CAPTURE(c.k);
    const FhTarget t = make(c.kind, g, c.k, c.scalar);
    for (int rep = 0; rep < 5; ++rep) {
      const auto q = random_point(t, rng);
      Rng sub(rep);
      CHECK(gradient_check(t, q, t.dimension(), sub) < 1e-6);
    }
  }
}

TEST_CASE("GMS with eta = 0 splits into two independent CAR densities") {
  const RegionGraph g = RegionGraph::lattice(3, 4);
  const FhTarget t = make(ModelKind::GMS, g, 2);
  Rng rng(9);
  auto q = random_point(t, rng);
  LatentState s = t.unpack(q);
  s.eta0 = s.eta1 = 0.0;
  const DensityParts p = t.parts(t.pack(s));
  const CarStructure cs(g);
  const Eigen::VectorXd phi1 = s.phi.col(0), phi2 = s.phi.col(1);
  const double cars = car_logpdf(cs, s.rho1, s.sigma1_sq, {phi1.data(), 12}) +
                      car_logpdf(cs, s.rho2, s.sigma2_sq, {phi2.data(), 12});
  const double hyper = std::log(s.rho1 * (1 - s.rho1)) + std::log(s.rho2 * (1 - s.rho2)) +
                       2 * (-0.5 * std::log(2 * M_PI * 100.0));
  auto ig = [](double v) { return 0.001 * std::log(0.001) - std::lgamma(0.001) - 0.001 * std::log(v) - 0.001 / v; };
  CHECK(p.phi_block == doctest::Approx(cars + hyper + ig(s.sigma1_sq) + ig(s.sigma2_sq)).epsilon(1e-12));
}

TEST_CASE("GMS phi block is exchangeable when both CARs match and eta = 0") {
  const RegionGraph g = RegionGraph::lattice(3, 3);
  const FhTarget t = make(ModelKind::GMS, g, 2);
  Rng rng(2);
  LatentState s = t.unpack(random_point(t, rng));
  s.eta0 = s.eta1 = 0.0;
  s.rho2 = s.rho1;
  s.sigma2_sq = s.sigma1_sq;
  const double a = t.parts(t.pack(s)).phi_block;
  s.phi.col(0).swap(s.phi.col(1));
  CHECK(t.parts(t.pack(s)).phi_block == doctest::Approx(a).epsilon(1e-13));
}

TEST_CASE("VSMS and SMS differ only in the phi block at equal phi") {
  const RegionGraph g = RegionGraph::lattice(3, 4);
  const FhTarget v = make(ModelKind::VSMS, g, 2);
  const FhTarget f = make(ModelKind::SMS, g, 2);
  Rng rng(4);
  const auto qv = random_point(v, rng);
  const LatentState sv = v.unpack(qv);
  LatentState sf = sv;
  sf.phi = v.phi(qv);
  sf.rho = 0.3;
  const auto qf = f.pack(sf);
  const DensityParts pv = v.parts(qv), pf = f.parts(qf);
  CHECK(pv.likelihood == doctest::Approx(pf.likelihood).epsilon(1e-13));
  CHECK(pv.theta_prior == doctest::Approx(pf.theta_prior).epsilon(1e-13));
  CHECK(pv.shared == doctest::Approx(pf.shared).epsilon(1e-13));
  CHECK((v.theta(qv) - f.theta(qf)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("pack and unpack round-trip") {
  const RegionGraph g = RegionGraph::lattice(3, 3);
  Rng rng(8);
  for (ModelKind kind : {ModelKind::FH, ModelKind::SMS, ModelKind::GMS, ModelKind::VSMS, ModelKind::VGMS}) {
    const FhTarget t = make(kind, g, kind == ModelKind::FH ? 1 : 2);
    for (int i = 0; i < 50; ++i) {
      const auto q = random_point(t, rng, 1.0);
      const auto back = t.pack(t.unpack(q));
      for (std::size_t j = 0; j < q.size(); ++j) REQUIRE(back[j] == doctest::Approx(q[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("kind and decoder consistency") {
  const RegionGraph g = RegionGraph::lattice(3, 3);
  const RegionGraph other = RegionGraph::lattice(3, 4);
  const auto data = testing::random_table(g, 2, 1);
  ModelSpec spec;
  spec.kind = ModelKind::VGMS;
  spec.k = 2;
  CHECK_THROWS_AS(build_target(spec, data, g, nullptr), Error);
  const auto wrong = testing::random_decoder(other, TrainingLayout::Univariate, 1, 1);
  try {
    build_target(spec, data, g, wrong);
    FAIL("expected HashMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::HashMismatch);
  }
  spec.kind = ModelKind::GMS;
  spec.k = 3;
  try {
    spec.validate();
    FAIL("expected KMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::KMismatch);
  }
  spec.k = 1;
  spec.kind = ModelKind::FH;
  CHECK_THROWS_AS(build_target(spec, data, g), Error);
}

TEST_CASE("singular design is rejected") {
  const RegionGraph g = RegionGraph::lattice(3, 3);
  auto data = testing::random_table(g, 1, 1);
  data.x.col(1).setOnes();
  ModelSpec spec;
  try {
    build_target(spec, data, g);
    FAIL("expected SingularDesign");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SingularDesign);
  }
}

TEST_CASE("targets are finite at jittered initial points") {
  const RegionGraph g = RegionGraph::lattice(4, 4);
  Rng rng(1);
  for (ModelKind kind : {ModelKind::FH, ModelKind::SMS, ModelKind::GMS, ModelKind::VSMS, ModelKind::VGMS}) {
    const FhTarget t = make(kind, g, 2, false, 0.2);
    for (int i = 0; i < 10; ++i) {
      auto q = t.initial_point();
      for (double& v : q) v += 0.1 * standard_normal(rng);
      std::vector<double> grad(q.size());
      CHECK(std::isfinite(t.log_density_gradient(q, grad)));
      for (double x : grad) REQUIRE(std::isfinite(x));
    }
  }
}
