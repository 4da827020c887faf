#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <vector>

namespace sae::transforms {

// Positive scalars: x = exp(u), log|dx/du| = u.
inline double positive(double u) { return std::exp(u); }
inline double positive_inverse(double x) { return std::log(x); }
inline double positive_log_jacobian(double u) { return u; }

// Unit interval: x = 1 / (1 + exp(-u)), log|dx/du| = log x (1 - x).
double unit(double u);
double unit_inverse(double x);
double unit_log_jacobian(double u);
/// d/du of unit_log_jacobian, i.e. 1 - 2x.
double unit_log_jacobian_grad(double u);

// Standard deviations: x = log(1 + exp(u)). Linear for large u, so a
// likelihood that is Gaussian in the scale keeps a bounded curvature there.
double softplus(double u);
double softplus_inverse(double x);
/// dx/du, the logistic function.
inline double softplus_derivative(double u) { return unit(u); }

/// Covariance through its lower Cholesky factor: the K(K+1)/2 unconstrained
/// values fill L row by row, with log-diagonal entries.
std::size_t cholesky_size(std::size_t k);
Eigen::MatrixXd cholesky_factor(std::span<const double> u, std::size_t k);
/// Inverse of the above for a positive-definite Sigma.
std::vector<double> cholesky_unconstrained(const Eigen::MatrixXd& sigma);
/// log|d Sigma / d u| = K log 2 + sum_i (K - i + 2) log L_ii (i from 1).
double cholesky_log_jacobian(std::span<const double> u, std::size_t k);
/// Maps dF/dL (lower part used) to dF/du, adding the Jacobian's gradient
/// when `with_jacobian` is set.
std::vector<double> cholesky_chain(std::span<const double> u, std::size_t k,
                                   const Eigen::MatrixXd& grad_l, bool with_jacobian);

}  // namespace sae::transforms
