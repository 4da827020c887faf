#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "sae/rng.hpp"
#include "sae/transforms.hpp"

using namespace sae;
namespace tr = sae::transforms;

TEST_CASE("positive and unit examples") {
  CHECK(tr::positive_inverse(1.0) == 0.0);
  CHECK(tr::positive(0.0) == 1.0);
  CHECK(tr::positive_log_jacobian(0.0) == 0.0);
  CHECK(tr::unit(0.0) == 0.5);
  CHECK(tr::unit_inverse(0.5) == 0.0);
  CHECK(tr::unit_log_jacobian(0.0) == doctest::Approx(std::log(0.25)).epsilon(1e-15));
}

TEST_CASE("unit transform is stable in the tails") {
  CHECK(tr::unit(-800.0) >= 0.0);
  CHECK(tr::unit(800.0) <= 1.0);
  CHECK(std::isfinite(tr::unit_log_jacobian(-800.0)));
  CHECK(tr::unit_log_jacobian(-800.0) == doctest::Approx(-800.0));
  for (double u : {-3.0, -0.2, 0.7, 4.0}) {
    const double h = 1e-6;
    const double fd = (tr::unit_log_jacobian(u + h) - tr::unit_log_jacobian(u - h)) / (2 * h);
    CHECK(tr::unit_log_jacobian_grad(u) == doctest::Approx(fd).epsilon(1e-8));
    const double x = tr::unit(u);
    const double dx = (tr::unit(u + h) - tr::unit(u - h)) / (2 * h);
    CHECK(std::log(dx) == doctest::Approx(tr::unit_log_jacobian(u)).epsilon(1e-8));
    CHECK(tr::unit_inverse(x) == doctest::Approx(u).epsilon(1e-12));
  }
}

TEST_CASE("round trip of 1000 random states") {
  Rng rng(3);
  double worst = 0.0;
  for (int s = 0; s < 1000; ++s) {
    const double u_pos = 3.0 * standard_normal(rng);
    const double u_unit = 3.0 * standard_normal(rng);
    worst = std::max(worst, std::abs(tr::positive_inverse(tr::positive(u_pos)) - u_pos));
    worst = std::max(worst, std::abs(tr::unit_inverse(tr::unit(u_unit)) - u_unit));
    const std::size_t k = 1 + static_cast<std::size_t>(s % 3);
    std::vector<double> u(tr::cholesky_size(k));
    for (double& v : u) v = standard_normal(rng);
    const Eigen::MatrixXd l = tr::cholesky_factor(u, k);
    const std::vector<double> back = tr::cholesky_unconstrained(l * l.transpose());
    for (std::size_t i = 0; i < u.size(); ++i) worst = std::max(worst, std::abs(back[i] - u[i]));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("Cholesky layout and Jacobian") {
  CHECK(tr::cholesky_size(1) == 1);
  CHECK(tr::cholesky_size(2) == 3);
  CHECK(tr::cholesky_size(3) == 6);
  const std::vector<double> u{0.2, -0.4, 0.3};
  const Eigen::MatrixXd l = tr::cholesky_factor(u, 2);
  CHECK(l(0, 0) == doctest::Approx(std::exp(0.2)));
  CHECK(l(1, 0) == -0.4);
  CHECK(l(1, 1) == doctest::Approx(std::exp(0.3)));
  CHECK(l(0, 1) == 0.0);

  // numerical Jacobian of u -> vech(Sigma) for K = 2 and 3
  Rng rng(4);
  for (std::size_t k : {2u, 3u}) {
    const std::size_t m = tr::cholesky_size(k);
    std::vector<double> v(m);
    for (double& x : v) x = 0.5 * standard_normal(rng);
    auto vech = [k](const std::vector<double>& w) {
      const Eigen::MatrixXd ll = tr::cholesky_factor(w, k);
      const Eigen::MatrixXd s = ll * ll.transpose();
      std::vector<double> out;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j <= i; ++j) out.push_back(s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      return out;
    };
    Eigen::MatrixXd jac(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    for (std::size_t c = 0; c < m; ++c) {
      std::vector<double> p = v, q = v;
      p[c] += 1e-6;
      q[c] -= 1e-6;
      const auto fp = vech(p), fq = vech(q);
      for (std::size_t r = 0; r < m; ++r) {
        jac(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = (fp[r] - fq[r]) / 2e-6;
      }
    }
    CHECK(tr::cholesky_log_jacobian(v, k) == doctest::Approx(std::log(std::abs(jac.determinant()))).epsilon(1e-7));
  }
}

TEST_CASE("cholesky_chain maps dF/dL to dF/du") {
  Rng rng(5);
  const std::size_t k = 3;
  std::vector<double> u(tr::cholesky_size(k));
  for (double& v : u) v = 0.4 * standard_normal(rng);
  Eigen::MatrixXd a(3, 3);
  for (Eigen::Index i = 0; i < 9; ++i) a.data()[i] = standard_normal(rng);
  // F(L) = sum(A .* L) + log-Jacobian
  auto f = [&](const std::vector<double>& w) {
    return (a.array() * tr::cholesky_factor(w, k).array()).sum() + tr::cholesky_log_jacobian(w, k);
  };
  const Eigen::MatrixXd grad_l = a.triangularView<Eigen::Lower>();
  const std::vector<double> g = tr::cholesky_chain(u, k, grad_l, true);
  for (std::size_t i = 0; i < u.size(); ++i) {
    std::vector<double> p = u, q = u;
    p[i] += 1e-6;
    q[i] -= 1e-6;
    CHECK(g[i] == doctest::Approx((f(p) - f(q)) / 2e-6).epsilon(1e-7));
  }
}
