#include "sae/transforms.hpp"

#include "sae/error.hpp"

namespace sae::transforms {
namespace {
std::size_t diag_index(std::size_t i) { return i * (i + 1) / 2 + i; }
}  // namespace

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double softplus_inverse(double x) {
  if (!(x > 0.0)) throw Error(ErrorKind::NonPositiveScale, "softplus_inverse needs a positive argument");
  return x > 30.0 ? x + std::log1p(-std::exp(-x)) : std::log(std::expm1(x));
}

double unit(double u) {
  return u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
}

double unit_inverse(double x) { return std::log(x) - std::log1p(-x); }

double unit_log_jacobian(double u) { return -softplus(-u) - softplus(u); }

double unit_log_jacobian_grad(double u) { return 1.0 - 2.0 * unit(u); }

std::size_t cholesky_size(std::size_t k) { return k * (k + 1) / 2; }

Eigen::MatrixXd cholesky_factor(std::span<const double> u, std::size_t k) {
  if (u.size() != cholesky_size(k)) throw Error(ErrorKind::ShapeMismatch, "Cholesky parameter count");
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  std::size_t idx = 0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j <= i; ++j, ++idx) {
      l(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = i == j ? std::exp(u[idx]) : u[idx];
    }
  }
  return l;
}

std::vector<double> cholesky_unconstrained(const Eigen::MatrixXd& sigma) {
  const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::SigmaNotPD, "covariance is not positive definite");
  const Eigen::MatrixXd l = llt.matrixL();
  std::vector<double> u;
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) u.push_back(i == j ? std::log(l(i, j)) : l(i, j));
  }
  return u;
}

double cholesky_log_jacobian(std::span<const double> u, std::size_t k) {
  double lj = static_cast<double>(k) * std::log(2.0);
  for (std::size_t i = 0; i < k; ++i) lj += static_cast<double>(k - i + 1) * u[diag_index(i)];
  return lj;
}

std::vector<double> cholesky_chain(std::span<const double> u, std::size_t k,
                                   const Eigen::MatrixXd& grad_l, bool with_jacobian) {
  std::vector<double> g(cholesky_size(k));
  std::size_t idx = 0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j <= i; ++j, ++idx) {
      const double d = grad_l(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      g[idx] = i == j ? d * std::exp(u[idx]) + (with_jacobian ? static_cast<double>(k - i + 1) : 0.0) : d;
    }
  }
  return g;
}

}  // namespace sae::transforms
