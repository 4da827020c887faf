#include "sae/harness.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>

#include "sae/error.hpp"

namespace sae {
namespace {
void require_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::ShapeMismatch,
                std::string(what) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                    " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}
}  // namespace

std::pair<double, double> delta_log(double y, double se) {
  if (!(y > 0.0) || !(se > 0.0)) {
    throw Error(ErrorKind::NonPositiveEstimate,
                "log transform needs y > 0 and se > 0, got y = " + std::to_string(y) +
                    ", se = " + std::to_string(se));
  }
  return {std::log(y), se / y};
}

double moe_to_se(double moe, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(ErrorKind::BadLevel, "confidence level must lie in (0, 1), got " + std::to_string(level));
  }
  if (moe < 0.0) throw Error(ErrorKind::NonPositiveScale, "negative margin of error");
  const double z = boost::math::quantile(boost::math::normal(), 0.5 * (1.0 + level));
  return moe / z;
}

Eigen::MatrixXd simulate_direct(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& gamma,
                                Rng& rng) {
  require_same_shape(truth, gamma, "simulate_direct");
  Eigen::MatrixXd y(truth.rows(), truth.cols());
  for (Eigen::Index k = 0; k < truth.cols(); ++k) {
    for (Eigen::Index i = 0; i < truth.rows(); ++i) {
      y(i, k) = truth(i, k) + gamma(i, k) * standard_normal(rng);
    }
  }
  return y;
}

Eigen::VectorXd rmse(const Eigen::MatrixXd& estimates, const Eigen::MatrixXd& truth) {
  require_same_shape(estimates, truth, "rmse");
  if (truth.rows() == 0) throw Error(ErrorKind::ShapeMismatch, "rmse of zero regions");
  return ((estimates - truth).array().square().colwise().mean()).sqrt().transpose();
}

double interval_score(double lower, double upper, double x, double alpha) {
  if (lower > upper) {
    throw Error(ErrorKind::InvertedInterval,
                "lower " + std::to_string(lower) + " exceeds upper " + std::to_string(upper));
  }
  double s = upper - lower;
  if (x < lower) s += 2.0 / alpha * (lower - x);
  if (x > upper) s += 2.0 / alpha * (x - upper);
  return s;
}

Eigen::VectorXd interval_score(const Eigen::MatrixXd& lower, const Eigen::MatrixXd& upper,
                               const Eigen::MatrixXd& truth, double alpha) {
  require_same_shape(lower, upper, "interval_score");
  require_same_shape(lower, truth, "interval_score");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(truth.cols());
  for (Eigen::Index k = 0; k < truth.cols(); ++k) {
    for (Eigen::Index i = 0; i < truth.rows(); ++i) {
      out(k) += interval_score(lower(i, k), upper(i, k), truth(i, k), alpha);
    }
    out(k) /= static_cast<double>(truth.rows());
  }
  return out;
}

Eigen::VectorXd coverage(const Eigen::MatrixXd& lower, const Eigen::MatrixXd& upper,
                         const Eigen::MatrixXd& truth) {
  require_same_shape(lower, upper, "coverage");
  require_same_shape(lower, truth, "coverage");
  return ((lower.array() <= truth.array()) && (truth.array() <= upper.array()))
      .cast<double>()
      .colwise()
      .mean()
      .transpose();
}

}  // namespace sae
