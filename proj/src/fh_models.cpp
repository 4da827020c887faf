#include "sae/fh_models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <optional>

#include "sae/error.hpp"
#include "sae/transforms.hpp"

namespace sae {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kLogPi = 1.1447298858494001741;

using Eigen::Index;
using Eigen::Map;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Index ix(std::size_t v) { return static_cast<Index>(v); }

// log IG(x | a, b) in terms of s = log x, plus the log-Jacobian s.
double log_ig_on_log(double s, double a, double b) {
  return a * std::log(b) - std::lgamma(a) - a * s - b * std::exp(-s);
}
double log_ig_on_log_grad(double s, double a, double b) { return -a + b * std::exp(-s); }

// log IG(sd^2 | a, b) for sd = softplus(u), plus the log-Jacobian log(2 sd sd').
double log_ig_on_softplus(double u, double a, double b) {
  const double sd = transforms::softplus(u);
  return a * std::log(b) - std::lgamma(a) + std::log(2.0) - (2.0 * a + 1.0) * std::log(sd) - b / (sd * sd) +
         std::log(transforms::softplus_derivative(u));
}
double log_ig_on_softplus_grad(double u, double a, double b) {
  const double sd = transforms::softplus(u), d = transforms::softplus_derivative(u);
  return d * (-(2.0 * a + 1.0) / sd + 2.0 * b / (sd * sd * sd)) + (1.0 - d);
}

double log_normal0(double x, double variance) {
  return -0.5 * (kLog2Pi + std::log(variance)) - 0.5 * x * x / variance;
}

double log_multigamma(double a, std::size_t k) {
  double r = 0.25 * static_cast<double>(k * (k - 1)) * kLogPi;
  for (std::size_t j = 1; j <= k; ++j) r += std::lgamma(a + 0.5 * (1.0 - static_cast<double>(j)));
  return r;
}

// Q x = D x - rho W x for one column.
VectorXd precision_times(const RegionGraph& g, double rho, const VectorXd& x, const VectorXd& wx) {
  VectorXd out(x.size());
  const auto& deg = g.degrees();
  for (Index i = 0; i < x.size(); ++i) out(i) = static_cast<double>(deg[static_cast<std::size_t>(i)]) * x(i) - rho * wx(i);
  return out;
}

VectorXd adjacency_times(const RegionGraph& g, const VectorXd& x) {
  VectorXd y(x.size());
  g.adjacency_multiply({x.data(), static_cast<std::size_t>(x.size())},
                       {y.data(), static_cast<std::size_t>(y.size())});
  return y;
}

// Contribution of the inverse-Wishart(nu, I) prior: value and d/dSigma.
double inverse_wishart(const MatrixXd& sigma_inv, double log_det_sigma, double nu, std::size_t k,
                       MatrixXd* d_sigma) {
  const double kd = static_cast<double>(k);
  if (d_sigma) {
    *d_sigma += -0.5 * (nu + kd + 1.0) * sigma_inv + 0.5 * sigma_inv * sigma_inv;
  }
  return -0.5 * nu * kd * std::log(2.0) - log_multigamma(0.5 * nu, k) -
         0.5 * (nu + kd + 1.0) * log_det_sigma - 0.5 * sigma_inv.trace();
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::FH: return "FH";
    case ModelKind::SMS: return "SMS-FH";
    case ModelKind::GMS: return "GMS-FH";
    case ModelKind::VSMS: return "VSMS-FH";
    case ModelKind::VGMS: return "VGMS-FH";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& text) {
  std::string t = lower(text);
  if (t.size() > 3 && t.substr(t.size() - 3) == "-fh") t.resize(t.size() - 3);
  if (t == "fh") return ModelKind::FH;
  if (t == "sms") return ModelKind::SMS;
  if (t == "gms") return ModelKind::GMS;
  if (t == "vsms") return ModelKind::VSMS;
  if (t == "vgms") return ModelKind::VGMS;
  throw Error(ErrorKind::InvalidConfig, "unknown model '" + text + "'");
}

bool is_variational(ModelKind kind) { return kind == ModelKind::VSMS || kind == ModelKind::VGMS; }
bool is_gmcar(ModelKind kind) { return kind == ModelKind::GMS || kind == ModelKind::VGMS; }

void ModelSpec::validate() const {
  if (k == 0) throw Error(ErrorKind::KMismatch, "K must be positive");
  if (is_gmcar(kind) && k != 2) {
    throw Error(ErrorKind::KMismatch, to_string(kind) + " needs K = 2, got " + std::to_string(k));
  }
  if (is_gmcar(kind) && gmcar_phi2 > 1) {
    throw Error(ErrorKind::InvalidConfig, "gmcar_order must name response 0 or 1");
  }
  if (scalar_scale && kind != ModelKind::VSMS) {
    throw Error(ErrorKind::InvalidConfig, "scalar-scale applies to VSMS-FH only");
  }
  if (!(priors.beta_variance > 0.0) || !(priors.eta_variance > 0.0) || !(priors.ig_shape > 0.0) ||
      !(priors.ig_scale > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "prior hyperparameters must be positive");
  }
  if (priors.iw_dof != 0.0 && !(priors.iw_dof > static_cast<double>(k) - 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "inverse-Wishart degrees of freedom must exceed K - 1");
  }
}

FhTarget build_target(const ModelSpec& spec, const DirectEstimateTable& data,
                      const RegionGraph& graph, std::shared_ptr<const Decoder> decoder) {
  spec.validate();
  data.validate();
  if (data.n_responses() != spec.k) {
    throw Error(ErrorKind::KMismatch, "data has " + std::to_string(data.n_responses()) +
                                          " responses, model expects " + std::to_string(spec.k));
  }
  if (data.n_regions() != graph.size() || data.region_ids != graph.ids()) {
    throw Error(ErrorKind::ShapeMismatch, "estimate table is not aligned with the graph");
  }
  if (is_variational(spec.kind)) {
    if (!decoder) throw Error(ErrorKind::InvalidConfig, to_string(spec.kind) + " needs a decoder");
    if (spec.kind == ModelKind::VSMS) {
      decoder->check_compatible(graph, TrainingLayout::Vectorized, spec.k);
    } else {
      decoder->check_compatible(graph, TrainingLayout::Univariate, 1);
    }
  }

  FhTarget t;
  t.spec_ = spec;
  t.data_ = data;
  t.decoder_ = is_variational(spec.kind) ? std::move(decoder) : nullptr;
  t.structure_ = std::make_shared<const CarStructure>(graph);
  t.n_ = graph.size();
  t.p_ = data.n_covariates();
  t.k_ = spec.k;
  t.phi2_col_ = spec.gmcar_phi2;
  t.phi1_col_ = 1 - std::min<std::size_t>(spec.gmcar_phi2, 1);

  std::size_t off = 0;
  auto add = [&](const std::string& name, std::size_t size) {
    t.blocks_.push_back({name, off, size});
    off += size;
    return off - size;
  };
  t.o_beta_ = add("beta", t.p_ * t.k_);
  t.o_tau_ = add("log_tau2", t.k_);
  t.o_u_ = add("u", t.n_ * t.k_);
  switch (spec.kind) {
    case ModelKind::FH:
      break;
    case ModelKind::SMS:
      t.o_rho_ = add("logit_rho", 1);
      t.o_chol_ = add("sigma_chol", transforms::cholesky_size(t.k_));
      t.o_phi_ = add("phi", t.n_ * t.k_);
      break;
    case ModelKind::GMS:
      t.o_gmcar_ = add("logit_rho1", 1);
      add("logit_rho2", 1);
      add("log_sigma1_sq", 1);
      add("log_sigma2_sq", 1);
      add("eta0", 1);
      add("eta1", 1);
      t.o_phi_ = add("phi", t.n_ * t.k_);
      break;
    case ModelKind::VSMS:
      t.o_z_ = add("z", t.decoder_->latent_dim());
      if (spec.scalar_scale) {
        t.o_scale_ = add("log_scale_sq", 1);
      } else {
        t.o_chol_ = add("sigma_chol", transforms::cholesky_size(t.k_));
      }
      break;
    case ModelKind::VGMS:
      t.o_z_ = add("z", 2 * t.decoder_->latent_dim());
      // sigma_i = softplus(u_i); a log scale puts an exponential likelihood
      // wall on the right of a posterior that is flat down to the IG wall
      t.o_gmcar_ = add("softplus_inv_sigma1", 1);
      add("softplus_inv_sigma2", 1);
      // eta * sigma_2: the likelihood sees only these products
      add("eta0_sigma2", 1);
      add("eta1_sigma2", 1);
      break;
  }
  t.dim_ = off;
  return t;
}

const ParameterBlock& FhTarget::block(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw Error(ErrorKind::InvalidConfig, to_string(spec_.kind) + " has no parameter block " + name);
}

double FhTarget::log_density(std::span<const double> q) const { return evaluate(q, nullptr, nullptr); }

double FhTarget::log_density_gradient(std::span<const double> q, std::span<double> grad) const {
  return evaluate(q, grad.data(), nullptr);
}

DensityParts FhTarget::parts(std::span<const double> q) const {
  DensityParts p;
  evaluate(q, nullptr, &p);
  return p;
}

namespace {

double outside_support(std::size_t dim, double* grad, DensityParts* parts) {
  const double ninf = -std::numeric_limits<double>::infinity();
  if (grad) std::fill(grad, grad + dim, 0.0);
  if (parts) {
    *parts = DensityParts{};
    parts->phi_block = ninf;
  }
  return ninf;
}

}  // namespace

double FhTarget::evaluate(std::span<const double> qs, double* grad, DensityParts* parts) const {
  if (qs.size() != dim_) {
    throw Error(ErrorKind::ShapeMismatch, "parameter vector has length " + std::to_string(qs.size()) +
                                              ", expected " + std::to_string(dim_));
  }
  const double* q = qs.data();
  const Index n = ix(n_), k = ix(k_), p = ix(p_);
  const RegionGraph& graph = structure_->graph();
  const PriorSpec& pr = spec_.priors;
  if (grad) std::fill(grad, grad + dim_, 0.0);
  DensityParts dp;

  const Map<const MatrixXd> beta(q + o_beta_, p, k);
  const Map<const MatrixXd> u(q + o_u_, n, k);
  const Map<const VectorXd> log_tau2(q + o_tau_, k);
  const VectorXd tau = (0.5 * log_tau2.array()).exp().matrix();

  // --- spatial effects (forward) ---
  MatrixXd phi = MatrixXd::Zero(n, k);
  MatrixXd chol, sigma_inv;
  double rho = 0.0, log_det_sigma = 0.0, scale = 0.0;
  std::optional<Decoder::Pass> pass;
  MatrixXd psi;  // decoder output arranged N x K (VSMS) or N x 2 (VGMS: psi_1, psi_2)
  VectorXd w_phi2;
  double s1 = 0.0, s2 = 0.0, eta0 = 0.0, eta1 = 0.0;

  switch (spec_.kind) {
    case ModelKind::FH:
      break;
    case ModelKind::SMS:
    case ModelKind::GMS:
      phi = Map<const MatrixXd>(q + o_phi_, n, k);
      break;
    case ModelKind::VSMS: {
      const std::size_t j = decoder_->latent_dim();
      pass.emplace(decoder_->forward(ad::TensorView(1, j, q + o_z_)));
      psi = Map<const MatrixXd>(pass->value().data, n, k);  // [col_1 | ... | col_K]
      if (spec_.scalar_scale) {
        scale = std::exp(0.5 * q[o_scale_]);
        phi = scale * psi;
      } else {
        chol = transforms::cholesky_factor({q + o_chol_, transforms::cholesky_size(k_)}, k_);
        phi = psi * chol.transpose();
      }
      break;
    }
    case ModelKind::VGMS: {
      const std::size_t j = decoder_->latent_dim();
      pass.emplace(decoder_->forward(ad::TensorView(2, j, q + o_z_)));
      // row-major 2 x N output: rows are psi_1 and psi_2
      psi = Map<const MatrixXd>(pass->value().data, n, 2);
      // s1, s2 hold the softplus coordinates of sigma_1, sigma_2 and
      // eta0, eta1 the scaled kappa = eta * sigma_2
      s1 = q[o_gmcar_];
      s2 = q[o_gmcar_ + 1];
      eta0 = q[o_gmcar_ + 2];
      eta1 = q[o_gmcar_ + 3];
      w_phi2 = adjacency_times(graph, psi.col(1));  // W psi_2
      phi.col(ix(phi2_col_)) = transforms::softplus(s2) * psi.col(1);
      phi.col(ix(phi1_col_)) = eta0 * psi.col(1) + eta1 * w_phi2 + transforms::softplus(s1) * psi.col(0);
      break;
    }
  }

  // --- likelihood and theta prior ---
  const MatrixXd theta = data_.x * beta + phi + u * tau.asDiagonal();
  MatrixXd g_theta = MatrixXd::Zero(n, k);
  for (Index kk = 0; kk < k; ++kk) {
    for (Index i = 0; i < n; ++i) {
      const double y = data_.y(i, kk);
      if (std::isnan(y)) continue;
      const double g = data_.gamma(i, kk);
      const double r = y - theta(i, kk);
      dp.likelihood += -0.5 * kLog2Pi - std::log(g) - 0.5 * r * r / (g * g);
      g_theta(i, kk) = r / (g * g);
    }
  }
  dp.theta_prior = -0.5 * static_cast<double>(n * k) * kLog2Pi - 0.5 * u.squaredNorm();

  // --- shared priors: beta, tau^2 ---
  dp.shared += static_cast<double>(p * k) * -0.5 * (kLog2Pi + std::log(pr.beta_variance)) -
               0.5 * beta.squaredNorm() / pr.beta_variance;
  for (Index kk = 0; kk < k; ++kk) dp.shared += log_ig_on_log(log_tau2(kk), pr.ig_shape, pr.ig_scale);

  if (grad) {
    Map<MatrixXd>(grad + o_beta_, p, k) = data_.x.transpose() * g_theta - beta / pr.beta_variance;
    Map<MatrixXd>(grad + o_u_, n, k) = g_theta * tau.asDiagonal() - u;
    for (Index kk = 0; kk < k; ++kk) {
      grad[o_tau_ + static_cast<std::size_t>(kk)] =
          0.5 * tau(kk) * g_theta.col(kk).dot(u.col(kk)) +
          log_ig_on_log_grad(log_tau2(kk), pr.ig_shape, pr.ig_scale);
    }
  }
  const MatrixXd& g_phi = g_theta;

  // --- kind-specific phi block ---
  switch (spec_.kind) {
    case ModelKind::FH:
      break;

    case ModelKind::SMS: {
      const double r = q[o_rho_];
      rho = transforms::unit(r);
      if (!(rho < 1.0)) return outside_support(qs.size(), grad, parts);
      chol = transforms::cholesky_factor({q + o_chol_, transforms::cholesky_size(k_)}, k_);
      const MatrixXd linv = chol.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(k, k));
      sigma_inv = linv.transpose() * linv;
      for (Index i = 0; i < k; ++i) log_det_sigma += 2.0 * std::log(chol(i, i));
      const CarFactor factor = structure_->factor(rho);
      MatrixXd w_phi(n, k), q_phi(n, k);
      for (Index kk = 0; kk < k; ++kk) {
        w_phi.col(kk) = adjacency_times(graph, phi.col(kk));
        q_phi.col(kk) = precision_times(graph, rho, phi.col(kk), w_phi.col(kk));
      }
      const MatrixXd s = phi.transpose() * q_phi;
      const double kd = static_cast<double>(k), nd = static_cast<double>(n);
      dp.phi_block += -0.5 * nd * kd * kLog2Pi + 0.5 * kd * factor.log_det() -
                      0.5 * nd * log_det_sigma - 0.5 * (sigma_inv * s).trace() +
                      transforms::unit_log_jacobian(r);
      const double nu = pr.iw_dof > 0.0 ? pr.iw_dof : kd + 1.0;
      MatrixXd d_sigma = MatrixXd::Zero(k, k);
      dp.shared += inverse_wishart(sigma_inv, log_det_sigma, nu, k_, grad ? &d_sigma : nullptr);
      dp.shared += transforms::cholesky_log_jacobian({q + o_chol_, transforms::cholesky_size(k_)}, k_);
      if (grad) {
        Map<MatrixXd>(grad + o_phi_, n, k) = g_phi - q_phi * sigma_inv;
        const MatrixXd s_w = phi.transpose() * w_phi;
        const double d_rho = -0.5 * kd * factor.trace_inverse_adjacency() + 0.5 * (sigma_inv * s_w).trace();
        grad[o_rho_] = d_rho * rho * (1.0 - rho) + transforms::unit_log_jacobian_grad(r);
        d_sigma += -0.5 * nd * sigma_inv + 0.5 * sigma_inv * s * sigma_inv;
        const MatrixXd g_l = 2.0 * d_sigma * chol;
        const auto g = transforms::cholesky_chain({q + o_chol_, transforms::cholesky_size(k_)}, k_, g_l, true);
        std::copy(g.begin(), g.end(), grad + o_chol_);
      }
      break;
    }

    case ModelKind::GMS: {
      const double r1 = q[o_gmcar_], r2 = q[o_gmcar_ + 1];
      s1 = q[o_gmcar_ + 2];
      s2 = q[o_gmcar_ + 3];
      eta0 = q[o_gmcar_ + 4];
      eta1 = q[o_gmcar_ + 5];
      const double rho1 = transforms::unit(r1), rho2 = transforms::unit(r2);
      // the logistic rounds to 1 for large logits; the CAR precision is singular there
      if (!(rho1 < 1.0 && rho2 < 1.0)) return outside_support(qs.size(), grad, parts);
      const double v1 = std::exp(s1), v2 = std::exp(s2);
      const VectorXd phi1 = phi.col(ix(phi1_col_));
      const VectorXd phi2 = phi.col(ix(phi2_col_));
      w_phi2 = adjacency_times(graph, phi2);
      const VectorXd resid = phi1 - eta0 * phi2 - eta1 * w_phi2;
      const VectorXd w_resid = adjacency_times(graph, resid);
      const VectorXd q1r = precision_times(graph, rho1, resid, w_resid);
      const VectorXd q2p = precision_times(graph, rho2, phi2, w_phi2);
      const CarFactor f1 = structure_->factor(rho1);
      const CarFactor f2 = structure_->factor(rho2);
      const double nd = static_cast<double>(n);
      dp.phi_block += -nd * kLog2Pi + 0.5 * f1.log_det() + 0.5 * f2.log_det() - 0.5 * nd * (s1 + s2) -
                      0.5 * resid.dot(q1r) / v1 - 0.5 * phi2.dot(q2p) / v2;
      dp.phi_block += transforms::unit_log_jacobian(r1) + transforms::unit_log_jacobian(r2) +
                      log_ig_on_log(s1, pr.ig_shape, pr.ig_scale) +
                      log_ig_on_log(s2, pr.ig_shape, pr.ig_scale) + log_normal0(eta0, pr.eta_variance) +
                      log_normal0(eta1, pr.eta_variance);
      if (grad) {
        const VectorXd g_r = -q1r / v1;
        const VectorXd w_gr = adjacency_times(graph, g_r);
        Map<MatrixXd> g_phi_out(grad + o_phi_, n, k);
        g_phi_out = g_phi;
        g_phi_out.col(ix(phi1_col_)) += g_r;
        g_phi_out.col(ix(phi2_col_)) += -eta0 * g_r - eta1 * w_gr - q2p / v2;
        const double d_rho1 = -0.5 * f1.trace_inverse_adjacency() + 0.5 * resid.dot(w_resid) / v1;
        const double d_rho2 = -0.5 * f2.trace_inverse_adjacency() + 0.5 * phi2.dot(w_phi2) / v2;
        grad[o_gmcar_] = d_rho1 * rho1 * (1.0 - rho1) + transforms::unit_log_jacobian_grad(r1);
        grad[o_gmcar_ + 1] = d_rho2 * rho2 * (1.0 - rho2) + transforms::unit_log_jacobian_grad(r2);
        grad[o_gmcar_ + 2] = -0.5 * nd + 0.5 * resid.dot(q1r) / v1 + log_ig_on_log_grad(s1, pr.ig_shape, pr.ig_scale);
        grad[o_gmcar_ + 3] = -0.5 * nd + 0.5 * phi2.dot(q2p) / v2 + log_ig_on_log_grad(s2, pr.ig_shape, pr.ig_scale);
        grad[o_gmcar_ + 4] = -g_r.dot(phi2) - eta0 / pr.eta_variance;
        grad[o_gmcar_ + 5] = -g_r.dot(w_phi2) - eta1 / pr.eta_variance;
      }
      break;
    }

    case ModelKind::VSMS: {
      const std::size_t j = decoder_->latent_dim();
      const Map<const VectorXd> z(q + o_z_, ix(j));
      dp.phi_block += -0.5 * static_cast<double>(j) * kLog2Pi - 0.5 * z.squaredNorm();
      MatrixXd g_psi;
      if (spec_.scalar_scale) {
        const double s = q[o_scale_];
        dp.shared += log_ig_on_log(s, pr.ig_shape, pr.ig_scale);
        if (grad) {
          g_psi = scale * g_phi;
          grad[o_scale_] = 0.5 * scale * g_phi.cwiseProduct(psi).sum() +
                           log_ig_on_log_grad(s, pr.ig_shape, pr.ig_scale);
        }
      } else {
        const MatrixXd linv = chol.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(k, k));
        sigma_inv = linv.transpose() * linv;
        for (Index i = 0; i < k; ++i) log_det_sigma += 2.0 * std::log(chol(i, i));
        const double nu = spec_.priors.iw_dof > 0.0 ? spec_.priors.iw_dof : static_cast<double>(k) + 1.0;
        MatrixXd d_sigma = MatrixXd::Zero(k, k);
        dp.shared += inverse_wishart(sigma_inv, log_det_sigma, nu, k_, grad ? &d_sigma : nullptr);
        dp.shared += transforms::cholesky_log_jacobian({q + o_chol_, transforms::cholesky_size(k_)}, k_);
        if (grad) {
          g_psi = g_phi * chol;
          const MatrixXd g_l = 2.0 * d_sigma * chol + g_phi.transpose() * psi;
          const auto g = transforms::cholesky_chain({q + o_chol_, transforms::cholesky_size(k_)}, k_, g_l, true);
          std::copy(g.begin(), g.end(), grad + o_chol_);
        }
      }
      if (grad) {
        const ad::Tensor seed(1, n_ * k_, std::vector<double>(g_psi.data(), g_psi.data() + g_psi.size()));
        const ad::Tensor g_z = decoder_->backward(*pass, seed);
        for (std::size_t i = 0; i < j; ++i) grad[o_z_ + i] = g_z.data()[i] - z(ix(i));
      }
      break;
    }

    case ModelKind::VGMS: {
      const std::size_t j = decoder_->latent_dim();
      const Map<const VectorXd> z(q + o_z_, ix(2 * j));
      dp.phi_block += -static_cast<double>(j) * kLog2Pi - 0.5 * z.squaredNorm();
      // eta = kappa / sigma_2 with log-Jacobian -log sigma_2 per coefficient
      const double sd2 = transforms::softplus(s2);
      dp.phi_block += log_ig_on_softplus(s1, pr.ig_shape, pr.ig_scale) +
                      log_ig_on_softplus(s2, pr.ig_shape, pr.ig_scale) + log_normal0(eta0 / sd2, pr.eta_variance) +
                      log_normal0(eta1 / sd2, pr.eta_variance) - 2.0 * std::log(sd2);
      if (grad) {
        const double sd1 = transforms::softplus(s1);
        const double v2 = pr.eta_variance * sd2 * sd2;
        const VectorXd g1 = g_phi.col(ix(phi1_col_));
        const VectorXd g_own = g_phi.col(ix(phi2_col_));
        grad[o_gmcar_] = transforms::softplus_derivative(s1) * g1.dot(psi.col(0)) +
                         log_ig_on_softplus_grad(s1, pr.ig_shape, pr.ig_scale);
        grad[o_gmcar_ + 1] =
            transforms::softplus_derivative(s2) *
                (g_own.dot(psi.col(1)) + (eta0 * eta0 + eta1 * eta1) / (v2 * sd2) - 2.0 / sd2) +
            log_ig_on_softplus_grad(s2, pr.ig_shape, pr.ig_scale);
        grad[o_gmcar_ + 2] = g1.dot(psi.col(1)) - eta0 / v2;
        grad[o_gmcar_ + 3] = g1.dot(w_phi2) - eta1 / v2;
        ad::Tensor seed(2, n_);
        Map<VectorXd>(seed.data(), n) = sd1 * g1;
        Map<VectorXd>(seed.data() + n_, n) = sd2 * g_own + eta0 * g1 + eta1 * adjacency_times(graph, g1);
        const ad::Tensor g_z = decoder_->backward(*pass, seed);
        for (std::size_t i = 0; i < 2 * j; ++i) grad[o_z_ + i] = g_z.data()[i] - z(ix(i));
      }
      break;
    }
  }

  if (parts) *parts = dp;
  return dp.total();
}

Eigen::MatrixXd FhTarget::phi(std::span<const double> q) const {
  const LatentState s = unpack(q);
  const Index n = ix(n_), k = ix(k_);
  switch (spec_.kind) {
    case ModelKind::FH:
      return MatrixXd::Zero(n, k);
    case ModelKind::SMS:
    case ModelKind::GMS:
      return s.phi;
    case ModelKind::VSMS: {
      const ad::Tensor out = decoder_->decode(ad::Tensor(1, s.z.size(), std::vector<double>(q.begin() + ix(o_z_), q.begin() + ix(o_z_ + s.z.size()))));
      const MatrixXd psi = Map<const MatrixXd>(out.data(), n, k);
      if (spec_.scalar_scale) return std::sqrt(s.scale_sq) * psi;
      return psi * transforms::cholesky_factor({q.data() + o_chol_, transforms::cholesky_size(k_)}, k_).transpose();
    }
    case ModelKind::VGMS: {
      const std::size_t j = decoder_->latent_dim();
      const ad::Tensor out = decoder_->decode(ad::Tensor(2, j, std::vector<double>(q.begin() + ix(o_z_), q.begin() + ix(o_z_ + 2 * j))));
      const Map<const MatrixXd> psi(out.data(), n, 2);
      MatrixXd phi(n, k);
      const VectorXd phi2 = std::sqrt(s.sigma2_sq) * psi.col(1);
      phi.col(ix(phi2_col_)) = phi2;
      phi.col(ix(phi1_col_)) = s.eta0 * phi2 + s.eta1 * adjacency_times(structure_->graph(), phi2) +
                               std::sqrt(s.sigma1_sq) * psi.col(0);
      return phi;
    }
  }
  return MatrixXd::Zero(n, k);
}

Eigen::MatrixXd FhTarget::theta(std::span<const double> q) const {
  const Index n = ix(n_), k = ix(k_);
  const Map<const MatrixXd> beta(q.data() + o_beta_, ix(p_), k);
  const Map<const MatrixXd> u(q.data() + o_u_, n, k);
  const VectorXd tau = (0.5 * Map<const VectorXd>(q.data() + o_tau_, k).array()).exp().matrix();
  return data_.x * beta + phi(q) + u * tau.asDiagonal();
}

LatentState FhTarget::unpack(std::span<const double> qs) const {
  if (qs.size() != dim_) throw Error(ErrorKind::ShapeMismatch, "parameter vector length");
  const double* q = qs.data();
  const Index n = ix(n_), k = ix(k_);
  LatentState s;
  s.beta = Map<const MatrixXd>(q + o_beta_, ix(p_), k);
  s.tau2 = Map<const VectorXd>(q + o_tau_, k).array().exp().matrix();
  s.u = Map<const MatrixXd>(q + o_u_, n, k);
  auto covariance = [&] {
    const MatrixXd l = transforms::cholesky_factor({q + o_chol_, transforms::cholesky_size(k_)}, k_);
    return MatrixXd(l * l.transpose());
  };
  switch (spec_.kind) {
    case ModelKind::FH:
      break;
    case ModelKind::SMS:
      s.rho = transforms::unit(q[o_rho_]);
      s.sigma = covariance();
      s.phi = Map<const MatrixXd>(q + o_phi_, n, k);
      break;
    case ModelKind::GMS:
      s.rho1 = transforms::unit(q[o_gmcar_]);
      s.rho2 = transforms::unit(q[o_gmcar_ + 1]);
      s.sigma1_sq = std::exp(q[o_gmcar_ + 2]);
      s.sigma2_sq = std::exp(q[o_gmcar_ + 3]);
      s.eta0 = q[o_gmcar_ + 4];
      s.eta1 = q[o_gmcar_ + 5];
      s.phi = Map<const MatrixXd>(q + o_phi_, n, k);
      break;
    case ModelKind::VSMS:
      s.z = Map<const MatrixXd>(q + o_z_, 1, ix(decoder_->latent_dim()));
      if (spec_.scalar_scale) {
        s.scale_sq = std::exp(q[o_scale_]);
      } else {
        s.sigma = covariance();
      }
      break;
    case ModelKind::VGMS: {
      const Index j = ix(decoder_->latent_dim());
      s.z = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(q + o_z_, 2, j);
      const double sd1 = transforms::softplus(q[o_gmcar_]), sd2 = transforms::softplus(q[o_gmcar_ + 1]);
      s.sigma1_sq = sd1 * sd1;
      s.sigma2_sq = sd2 * sd2;
      s.eta0 = q[o_gmcar_ + 2] / sd2;
      s.eta1 = q[o_gmcar_ + 3] / sd2;
      break;
    }
  }
  return s;
}

std::vector<double> FhTarget::pack(const LatentState& s) const {
  const Index n = ix(n_), k = ix(k_);
  std::vector<double> q(dim_, 0.0);
  auto put = [&](std::size_t off, const MatrixXd& m, Index rows, Index cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols) {
      throw Error(ErrorKind::ShapeMismatch, std::string("state field ") + what + " has the wrong shape");
    }
    Map<MatrixXd>(q.data() + off, rows, cols) = m;
  };
  put(o_beta_, s.beta, ix(p_), k, "beta");
  put(o_tau_, s.tau2.array().log().matrix(), k, 1, "tau2");
  put(o_u_, s.u, n, k, "u");
  auto put_sigma = [&] {
    const auto u = transforms::cholesky_unconstrained(s.sigma);
    std::copy(u.begin(), u.end(), q.begin() + ix(o_chol_));
  };
  switch (spec_.kind) {
    case ModelKind::FH:
      break;
    case ModelKind::SMS:
      q[o_rho_] = transforms::unit_inverse(s.rho);
      put_sigma();
      put(o_phi_, s.phi, n, k, "phi");
      break;
    case ModelKind::GMS:
      q[o_gmcar_] = transforms::unit_inverse(s.rho1);
      q[o_gmcar_ + 1] = transforms::unit_inverse(s.rho2);
      q[o_gmcar_ + 2] = std::log(s.sigma1_sq);
      q[o_gmcar_ + 3] = std::log(s.sigma2_sq);
      q[o_gmcar_ + 4] = s.eta0;
      q[o_gmcar_ + 5] = s.eta1;
      put(o_phi_, s.phi, n, k, "phi");
      break;
    case ModelKind::VSMS:
      put(o_z_, s.z, 1, ix(decoder_->latent_dim()), "z");
      if (spec_.scalar_scale) {
        q[o_scale_] = std::log(s.scale_sq);
      } else {
        put_sigma();
      }
      break;
    case ModelKind::VGMS: {
      const Index j = ix(decoder_->latent_dim());
      if (s.z.rows() != 2 || s.z.cols() != j) throw Error(ErrorKind::ShapeMismatch, "state field z has the wrong shape");
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(q.data() + o_z_, 2, j) = s.z;
      q[o_gmcar_] = transforms::softplus_inverse(std::sqrt(s.sigma1_sq));
      q[o_gmcar_ + 1] = transforms::softplus_inverse(std::sqrt(s.sigma2_sq));
      q[o_gmcar_ + 2] = s.eta0 * std::sqrt(s.sigma2_sq);
      q[o_gmcar_ + 3] = s.eta1 * std::sqrt(s.sigma2_sq);
      break;
    }
  }
  return q;
}

std::vector<double> FhTarget::initial_point() const {
  const Index n = ix(n_), k = ix(k_), p = ix(p_);
  LatentState s;
  s.beta = MatrixXd::Zero(p, k);
  s.tau2 = VectorXd::Ones(k);
  s.u = MatrixXd::Zero(n, k);
  VectorXd spatial_var = VectorXd::Ones(k);
  for (Index kk = 0; kk < k; ++kk) {
    std::vector<Index> rows;
    for (Index i = 0; i < n; ++i) {
      if (!std::isnan(data_.y(i, kk))) rows.push_back(i);
    }
    const auto m = ix(rows.size());
    if (m <= p) continue;
    MatrixXd xo(m, p);
    VectorXd yo(m), go(m);
    for (Index r = 0; r < m; ++r) {
      xo.row(r) = data_.x.row(rows[static_cast<std::size_t>(r)]);
      yo(r) = data_.y(rows[static_cast<std::size_t>(r)], kk);
      go(r) = data_.gamma(rows[static_cast<std::size_t>(r)], kk);
    }
    s.beta.col(kk) = xo.colPivHouseholderQr().solve(yo);
    const double resid_var = (yo - xo * s.beta.col(kk)).squaredNorm() / static_cast<double>(m - p);
    const double excess = std::max(resid_var - go.squaredNorm() / static_cast<double>(m), 0.05 * resid_var);
    const double v = std::max(excess, 1e-6);
    s.tau2(kk) = 0.5 * v;
    spatial_var(kk) = 0.5 * v;
  }
  s.sigma = spatial_var.asDiagonal();
  s.phi = MatrixXd::Zero(n, k);
  if (is_gmcar(spec_.kind)) {
    s.sigma1_sq = spatial_var(ix(phi1_col_));
    s.sigma2_sq = spatial_var(ix(phi2_col_));
  }
  s.scale_sq = spatial_var.mean();
  if (spec_.kind == ModelKind::VSMS) s.z = MatrixXd::Zero(1, ix(decoder_->latent_dim()));
  if (spec_.kind == ModelKind::VGMS) s.z = MatrixXd::Zero(2, ix(decoder_->latent_dim()));
  return pack(s);
}

}  // namespace sae
