#include "sae/spatial_priors.hpp"

#include <cmath>
#include <numbers>

#include "sae/error.hpp"

namespace sae {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void check_scale(double sigma2) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
    throw Error(ErrorKind::NonPositiveScale, "variance must be positive, got " + std::to_string(sigma2));
  }
}

Eigen::VectorXd normal_vector(std::size_t n, Rng& rng) {
  Eigen::VectorXd e(static_cast<Eigen::Index>(n));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = normal(rng);
  return e;
}

}  // namespace

CarSample sample_car(const CarStructure& structure, double rho, double sigma2,
                     std::size_t n_draws, Rng& rng) {
  check_rho(rho);
  check_scale(sigma2);
  const CarFactor factor = structure.factor(rho);
  const double sigma = std::sqrt(sigma2);
  CarSample out;
  out.values.resize(static_cast<Eigen::Index>(structure.size()), static_cast<Eigen::Index>(n_draws));
  out.rho_used.assign(n_draws, rho);
  for (std::size_t d = 0; d < n_draws; ++d) {
    out.values.col(static_cast<Eigen::Index>(d)) =
        sigma * factor.whiten_inverse(normal_vector(structure.size(), rng));
  }
  return out;
}

Eigen::MatrixXd response_cholesky(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() == 0) {
    throw Error(ErrorKind::ShapeMismatch, "response covariance must be square");
  }
  if (!sigma.isApprox(sigma.transpose(), 1e-12)) {
    throw Error(ErrorKind::SigmaNotPD, "response covariance is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::SigmaNotPD, "response covariance is not positive definite");
  }
  return llt.matrixL();
}

SeparableSample sample_separable(const CarStructure& structure, double rho,
                                 const Eigen::MatrixXd& sigma, std::size_t n_draws, Rng& rng) {
  check_rho(rho);
  SeparableSample out;
  out.sigma = sigma;
  out.chol = response_cholesky(sigma);
  const CarFactor factor = structure.factor(rho);
  const auto n = static_cast<Eigen::Index>(structure.size());
  const Eigen::Index k = sigma.rows();
  out.phi.reserve(n_draws);
  out.psi.reserve(n_draws);
  for (std::size_t d = 0; d < n_draws; ++d) {
    Eigen::MatrixXd psi(n, k);
    for (Eigen::Index c = 0; c < k; ++c) {
      psi.col(c) = factor.whiten_inverse(normal_vector(structure.size(), rng));
    }
    out.phi.push_back(psi * out.chol.transpose());
    out.psi.push_back(std::move(psi));
  }
  return out;
}

void bridge_multiply(const RegionGraph& graph, double eta0, double eta1,
                     std::span<const double> x, std::span<double> y) {
  const std::size_t n = graph.size();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j : graph.neighbors(i)) s += x[j];
    y[i] = eta0 * x[i] + eta1 * s;
  }
}

GmcarSample sample_gmcar(const CarStructure& structure, const GmcarParams& params,
                         std::size_t n_draws, Rng& rng) {
  check_rho(params.rho1);
  check_rho(params.rho2);
  check_scale(params.sigma1_sq);
  check_scale(params.sigma2_sq);
  const CarFactor f1 = structure.factor(params.rho1);
  const CarFactor f2 = structure.factor(params.rho2);
  const double s1 = std::sqrt(params.sigma1_sq), s2 = std::sqrt(params.sigma2_sq);
  const auto n = static_cast<Eigen::Index>(structure.size());
  GmcarSample out;
  out.params = params;
  out.phi1.resize(n, static_cast<Eigen::Index>(n_draws));
  out.phi2.resize(n, static_cast<Eigen::Index>(n_draws));
  Eigen::VectorXd bridged(n);
  for (std::size_t d = 0; d < n_draws; ++d) {
    const auto c = static_cast<Eigen::Index>(d);
    const Eigen::VectorXd phi2 = s2 * f2.whiten_inverse(normal_vector(structure.size(), rng));
    bridge_multiply(structure.graph(), params.eta0, params.eta1, {phi2.data(), static_cast<std::size_t>(phi2.size())},
                    {bridged.data(), static_cast<std::size_t>(bridged.size())});
    out.phi2.col(c) = phi2;
    out.phi1.col(c) = bridged + s1 * f1.whiten_inverse(normal_vector(structure.size(), rng));
  }
  return out;
}

double car_logpdf(const CarStructure& structure, const CarFactor& factor, double sigma2,
                  std::span<const double> x) {
  check_scale(sigma2);
  const double n = static_cast<double>(structure.size());
  return -0.5 * n * (kLog2Pi + std::log(sigma2)) + 0.5 * factor.log_det() -
         0.5 * structure.quadratic_form(factor.rho(), x) / sigma2;
}

double car_logpdf(const CarStructure& structure, double rho, double sigma2,
                  std::span<const double> x) {
  check_rho(rho);
  check_scale(sigma2);
  return car_logpdf(structure, structure.factor(rho), sigma2, x);
}

double gmcar_logpdf(const CarStructure& structure, const GmcarParams& params,
                    std::span<const double> phi1, std::span<const double> phi2) {
  std::vector<double> resid(structure.size());
  bridge_multiply(structure.graph(), params.eta0, params.eta1, phi2, resid);
  for (std::size_t i = 0; i < resid.size(); ++i) resid[i] = phi1[i] - resid[i];
  return car_logpdf(structure, params.rho2, params.sigma2_sq, phi2) +
         car_logpdf(structure, params.rho1, params.sigma1_sq, resid);
}

double separable_logpdf(const CarStructure& structure, double rho, const Eigen::MatrixXd& sigma,
                        const Eigen::MatrixXd& phi) {
  check_rho(rho);
  const Eigen::MatrixXd chol = response_cholesky(sigma);
  const CarFactor factor = structure.factor(rho);
  const auto n = static_cast<double>(structure.size());
  const auto k = static_cast<double>(sigma.rows());
  if (phi.rows() != static_cast<Eigen::Index>(structure.size()) || phi.cols() != sigma.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "phi must be N x K");
  }
  // S = phi^T Q phi, assembled entrywise from the graph
  const Eigen::Index kk = phi.cols();
  Eigen::MatrixXd qphi(phi.rows(), kk);
  const SparseMatrix q = structure.precision(rho);
  qphi = q * phi;
  const Eigen::MatrixXd s = phi.transpose() * qphi;
  double log_det_sigma = 0.0;
  for (Eigen::Index i = 0; i < kk; ++i) log_det_sigma += 2.0 * std::log(chol(i, i));
  const Eigen::MatrixXd sigma_inv_s = chol.triangularView<Eigen::Lower>().transpose().solve(
      chol.triangularView<Eigen::Lower>().solve(s));
  return -0.5 * n * k * kLog2Pi + 0.5 * k * factor.log_det() - 0.5 * n * log_det_sigma -
         0.5 * sigma_inv_s.trace();
}

std::string to_string(TrainingLayout layout) {
  return layout == TrainingLayout::Univariate ? "uni" : "vec";
}

TrainingLayout parse_layout(const std::string& text) {
  if (text == "uni" || text == "univariate") return TrainingLayout::Univariate;
  if (text == "vec" || text == "vectorized") return TrainingLayout::Vectorized;
  throw Error(ErrorKind::InvalidConfig, "unknown layout '" + text + "' (expected uni or vec)");
}

TrainingSet generate_training_set(const CarStructure& structure, std::size_t n_samples,
                                  TrainingLayout layout, std::size_t k, std::uint64_t seed) {
  if (layout == TrainingLayout::Univariate && k != 1) {
    throw Error(ErrorKind::InvalidConfig, "univariate layout requires K = 1");
  }
  if (k == 0) throw Error(ErrorKind::InvalidConfig, "K must be positive");
  TrainingSet set;
  set.layout = layout;
  set.n_regions = structure.size();
  set.k = k;
  set.graph_hash = structure.graph().content_hash();
  set.seed = seed;
  set.samples.resize(static_cast<Eigen::Index>(n_samples), static_cast<Eigen::Index>(set.dim()));
  set.rho.resize(n_samples);
  Rng rng(seed);
  const std::size_t n = structure.size();
  for (std::size_t s = 0; s < n_samples; ++s) {
    double rho = uniform01(rng);
    while (rho >= 1.0) rho = uniform01(rng);  // generate_canonical may round up to 1
    set.rho[s] = rho;
    const CarFactor factor = structure.factor(rho);
    for (std::size_t c = 0; c < k; ++c) {
      const Eigen::VectorXd x = factor.whiten_inverse(normal_vector(n, rng));
      for (std::size_t i = 0; i < n; ++i) {
        set.samples(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(c * n + i)) =
            x[static_cast<Eigen::Index>(i)];
      }
    }
  }
  return set;
}

}  // namespace sae
