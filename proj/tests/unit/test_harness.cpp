#include <doctest.h>

#include <cmath>

#include "sae/error.hpp"
#include "sae/harness.hpp"

using namespace sae;

namespace {

ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Parse;
}

Eigen::MatrixXd col(std::initializer_list<double> v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

}  // namespace

TEST_CASE("delta method") {
  const auto [ly, ls] = delta_log(100.0, 10.0);
  CHECK(ly == doctest::Approx(4.60517).epsilon(1e-6));
  CHECK(ls == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(delta_log(1.0, 1.0) == std::pair<double, double>{0.0, 1.0});
  CHECK(kind_of([] { delta_log(-5.0, 1.0); }) == ErrorKind::NonPositiveEstimate);
  CHECK(kind_of([] { delta_log(5.0, 0.0); }) == ErrorKind::NonPositiveEstimate);
}

TEST_CASE("margin of error to standard error") {
  CHECK(moe_to_se(1.645, 0.90) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(moe_to_se(1.6448536269514722, 0.90) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(moe_to_se(0.0, 0.5) == 0.0);
  CHECK(moe_to_se(1.96, 0.95) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(kind_of([] { moe_to_se(1.0, 1.0); }) == ErrorKind::BadLevel);
  CHECK(kind_of([] { moe_to_se(1.0, 0.0); }) == ErrorKind::BadLevel);
  CHECK(kind_of([] { moe_to_se(-1.0, 0.9); }) == ErrorKind::NonPositiveScale);
}

TEST_CASE("simulate_direct") {
  const Eigen::MatrixXd truth = Eigen::MatrixXd::Constant(3, 2, 4.0);
  Rng a(1), b(1);
  CHECK(simulate_direct(truth, Eigen::MatrixXd::Constant(3, 2, 1e-12), a).isApprox(truth, 1e-10));
  const Eigen::MatrixXd gamma = (Eigen::MatrixXd(3, 2) << 0.1, 0.5, 1.0, 2.0, 0.3, 0.7).finished();
  Rng c(2), d(2);
  CHECK(simulate_direct(truth, gamma, c) == simulate_direct(truth, gamma, d));
  Rng rng(3);
  Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(3, 2);
  const int reps = 10000;
  for (int r = 0; r < reps; ++r) sq += (simulate_direct(truth, gamma, rng) - truth).array().square().matrix();
  const Eigen::MatrixXd sd = (sq / reps).array().sqrt();
  CHECK(((sd.array() / gamma.array()) - 1.0).abs().maxCoeff() < 0.03);
  CHECK(kind_of([&] { simulate_direct(truth, Eigen::MatrixXd::Ones(2, 2), rng); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("rmse") {
  CHECK(rmse(col({1, 2}), col({1, 2}))(0) == 0.0);
  CHECK(rmse(col({0, 0}), col({3, 4}))(0) == doctest::Approx(std::sqrt(12.5)));
  CHECK(rmse(col({0, 0}), col({3, 4}))(0) == doctest::Approx(3.5355).epsilon(1e-4));
  CHECK(rmse(col({10, 10}), col({13, 14}))(0) == doctest::Approx(std::sqrt(12.5)));
  CHECK(kind_of([] { rmse(col({0}), col({1, 2})); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("interval score") {
  CHECK(interval_score(0, 1, 0.5) == 1.0);
  CHECK(interval_score(0, 1, 1.5) == doctest::Approx(21.0));
  CHECK(interval_score(0, 1, -0.25) == doctest::Approx(11.0));
  CHECK(kind_of([] { interval_score(1, 0, 0.5); }) == ErrorKind::InvertedInterval);
  CHECK(interval_score(col({0, 0}), col({1, 1}), col({0.5, 1.5}))(0) == doctest::Approx(11.0));
  // fixed width: covering the point never scores worse
  for (double shift : {-0.7, -0.2, 0.4, 0.9}) CHECK(interval_score(shift, shift + 1, 2.0) >= interval_score(1.5, 2.5, 2.0));
}

TEST_CASE("coverage") {
  CHECK(coverage(col({0, 0}), col({1, 1}), col({0.5, 0.2}))(0) == 1.0);
  CHECK(coverage(col({0, 0}), col({1, 1}), col({2, -1}))(0) == 0.0);
  CHECK(coverage(col({0, 0}), col({1, 1}), col({0.5, 3}))(0) == 0.5);
  CHECK(coverage(col({0}), col({1}), col({1}))(0) == 1.0);
  CHECK(kind_of([] { coverage(col({0}), col({1, 1}), col({1})); }) == ErrorKind::ShapeMismatch);
}
