#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "sae/car_precision.hpp"
#include "sae/error.hpp"

using namespace sae;

TEST_CASE("2-node path at rho 0.5") {
  const RegionGraph g = RegionGraph::from_edge_list("a b");
  const Eigen::MatrixXd q = Eigen::MatrixXd(car_precision(g, 0.5).matrix());
  Eigen::Matrix2d expected;
  expected << 1, -0.5, -0.5, 1;
  CHECK((q - expected).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::MatrixXd inv = car_precision(g, 0.5).cholesky().dense_inverse();
  CHECK(inv(0, 0) == doctest::Approx(4.0 / 3.0));
  CHECK(inv(0, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(car_precision(g, 0.5).cholesky().log_det() == doctest::Approx(std::log(0.75)));
}

TEST_CASE("rho 0 gives the degree matrix") {
  const RegionGraph g = RegionGraph::lattice(3, 4);
  const Eigen::MatrixXd q = Eigen::MatrixXd(car_precision(g, 0.0).matrix());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      CHECK(q(i, j) == (i == j ? static_cast<double>(g.degrees()[static_cast<std::size_t>(i)]) : 0.0));
    }
  }
}

TEST_CASE("4-cycle at rho 0.9") {
  const RegionGraph g = RegionGraph::from_edge_list("a b\nb c\nc d\nd a");
  const Eigen::MatrixXd q = Eigen::MatrixXd(car_precision(g, 0.9).matrix());
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(q(i, i) == 2.0);
  CHECK(q(0, 1) == doctest::Approx(-0.9));
  CHECK(q(0, 2) == 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q);
  CHECK(es.eigenvalues().minCoeff() == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("rho range") {
  const RegionGraph g = RegionGraph::lattice(2, 2);
  CHECK_THROWS_AS(car_precision(g, 1.0), Error);
  CHECK_THROWS_AS(car_precision(g, -0.1), Error);
  try {
    car_precision(g, 1.0);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::RhoOutOfRange);
  }
}

TEST_CASE("symmetric positive definite across rho on small graphs") {
  for (const RegionGraph& g : {RegionGraph::lattice(5, 5), RegionGraph::lattice(7, 7),
                               RegionGraph::from_edge_list("a b\nb c\nc a\nc d\nd e")}) {
    const CarStructure cs(g);
    for (double rho : {0.0, 0.3, 0.9, 0.999}) {
      const Eigen::MatrixXd q = Eigen::MatrixXd(cs.precision(rho));
      CHECK((q - q.transpose()).cwiseAbs().maxCoeff() == 0.0);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q);
      CHECK(es.eigenvalues().minCoeff() > 0.0);
      const CarFactor f = cs.factor(rho);
      CHECK(f.log_det() == doctest::Approx(es.eigenvalues().array().log().sum()).epsilon(1e-10));
      CHECK((f.dense_inverse() * q - Eigen::MatrixXd::Identity(q.rows(), q.cols())).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("trace of Q^-1 W and quadratic form against dense algebra") {
  const RegionGraph g = RegionGraph::lattice(4, 6);
  const CarStructure cs(g);
  const Eigen::MatrixXd d = Eigen::MatrixXd(cs.precision(0.0));
  const Eigen::MatrixXd q = Eigen::MatrixXd(cs.precision(0.7));
  const Eigen::MatrixXd w = (d - q) / 0.7;
  const CarFactor f = cs.factor(0.7);
  CHECK(f.trace_inverse_adjacency() == doctest::Approx((q.inverse() * w).trace()).epsilon(1e-10));
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(q.rows(), -1.0, 2.0);
  CHECK(cs.quadratic_form(0.7, {x.data(), static_cast<std::size_t>(x.size())}) ==
        doctest::Approx(x.dot(q * x)).epsilon(1e-12));
  const Eigen::VectorXd s = f.solve(x);
  CHECK((q * s - x).cwiseAbs().maxCoeff() < 1e-10);
}
