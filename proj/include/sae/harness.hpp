#pragma once

#include <Eigen/Dense>
#include <utility>

#include "sae/rng.hpp"

namespace sae {

/// First-order delta method for log y: returns (log y, se / y).
/// Throws Error{NonPositiveEstimate} unless y > 0 and se > 0.
std::pair<double, double> delta_log(double y, double se);

/// se = moe / z_{(1 + level) / 2}. Throws Error{BadLevel} unless level is in
/// (0, 1), and Error{NonPositiveScale} for negative margins.
double moe_to_se(double moe, double level = 0.90);

/// Y = truth + N(0, gamma^2) cellwise. Throws Error{ShapeMismatch}.
Eigen::MatrixXd simulate_direct(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& gamma,
                                Rng& rng);

/// Per-response (column) root mean squared error. Throws Error{ShapeMismatch}.
Eigen::VectorXd rmse(const Eigen::MatrixXd& estimates, const Eigen::MatrixXd& truth);

/// Gneiting-Raftery interval score of one interval. Throws Error{InvertedInterval}.
double interval_score(double lower, double upper, double x, double alpha = 0.05);
/// Per-response mean interval score over regions.
Eigen::VectorXd interval_score(const Eigen::MatrixXd& lower, const Eigen::MatrixXd& upper,
                               const Eigen::MatrixXd& truth, double alpha = 0.05);

/// Per-response fraction of regions with lower <= truth <= upper.
Eigen::VectorXd coverage(const Eigen::MatrixXd& lower, const Eigen::MatrixXd& upper,
                         const Eigen::MatrixXd& truth);

}  // namespace sae
