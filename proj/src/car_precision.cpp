#include "sae/car_precision.hpp"

#include <Eigen/OrderingMethods>
#include <algorithm>
#include <cmath>
#include <string>

#include "sae/error.hpp"

namespace sae {

void check_rho(double rho) {
  if (!(rho >= 0.0 && rho < 1.0)) {
    throw Error(ErrorKind::RhoOutOfRange,
                "rho must lie in [0, 1), got " + std::to_string(rho));
  }
}

CarStructure::CarStructure(const RegionGraph& graph)
    : graph_(std::make_shared<const RegionGraph>(graph)), n_(graph.size()) {
  const SparseMatrix pattern = precision(0.5);
  Permutation inverse;
  Eigen::AMDOrdering<int> amd;
  amd(pattern, inverse);
  perm_ = inverse.inverse();
  const SparseMatrix w = (precision(0.0) - precision(1.0)).pruned();
  // full (both triangles) P W P^T
  auto wp = std::make_shared<SparseMatrix>(w.rows(), w.cols());
  *wp = w.selfadjointView<Eigen::Lower>().twistedBy(perm_);
  w_permuted_ = std::move(wp);
}

SparseMatrix CarStructure::precision(double rho) const {
  std::vector<Eigen::Triplet<double, int>> triplets;
  triplets.reserve(n_ + 2 * graph_->edges().size());
  for (std::size_t i = 0; i < n_; ++i) {
    const int ii = static_cast<int>(i);
    triplets.emplace_back(ii, ii, static_cast<double>(graph_->degrees()[i]));
  }
  for (const Edge& e : graph_->edges()) {
    const int a = static_cast<int>(e.first), b = static_cast<int>(e.second);
    triplets.emplace_back(a, b, -rho);
    triplets.emplace_back(b, a, -rho);
  }
  SparseMatrix q(static_cast<int>(n_), static_cast<int>(n_));
  q.setFromTriplets(triplets.begin(), triplets.end());
  return q;
}

CarFactor CarStructure::factor(double rho) const {
  check_rho(rho);
  const SparseMatrix q = precision(rho);
  SparseMatrix qp(q.rows(), q.cols());
  qp.selfadjointView<Eigen::Lower>() = q.selfadjointView<Eigen::Lower>().twistedBy(perm_);

  auto solver = std::make_shared<CarFactor::Solver>();
  solver->compute(qp);
  if (solver->info() != Eigen::Success) {
    throw Error(ErrorKind::RhoOutOfRange,
                "precision matrix not positive definite at rho = " + std::to_string(rho));
  }
  CarFactor f;
  f.rho_ = rho;
  f.perm_ = perm_;
  const SparseMatrix& l = solver->matrixL();
  double log_det = 0.0;
  for (int j = 0; j < l.outerSize(); ++j) {
    // natural ordering: the diagonal is the first stored entry of each column
    SparseMatrix::InnerIterator it(l, j);
    log_det += std::log(it.value());
  }
  f.log_det_ = 2.0 * log_det;
  f.solver_ = std::move(solver);
  f.w_permuted_ = w_permuted_;
  return f;
}

double CarStructure::quadratic_form(double rho, std::span<const double> x) const {
  double diag = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    diag += static_cast<double>(graph_->degrees()[i]) * x[i] * x[i];
  }
  return diag - rho * graph_->adjacency_quadratic(x);
}

Eigen::VectorXd CarFactor::solve(const Eigen::VectorXd& b) const {
  const Eigen::VectorXd bp = perm_ * b;
  const Eigen::VectorXd xp = solver_->solve(bp);
  return perm_.transpose() * xp;
}

Eigen::VectorXd CarFactor::whiten_inverse(const Eigen::VectorXd& e) const {
  const Eigen::VectorXd xp = solver_->matrixU().solve(e);
  return perm_.transpose() * xp;
}

double CarFactor::trace_inverse_adjacency() const {
  // column blocks bound the dense workspace at n x 64
  constexpr Eigen::Index kBlock = 64;
  const Eigen::Index n = w_permuted_->cols();
  double trace = 0.0;
  for (Eigen::Index c0 = 0; c0 < n; c0 += kBlock) {
    const Eigen::Index width = std::min(kBlock, n - c0);
    const Eigen::MatrixXd rhs = Eigen::MatrixXd(w_permuted_->middleCols(c0, width));
    const Eigen::MatrixXd x = solver_->solve(rhs);
    for (Eigen::Index j = 0; j < width; ++j) trace += x(c0 + j, j);
  }
  return trace;
}

Eigen::MatrixXd CarFactor::dense_inverse() const {
  const auto n = static_cast<Eigen::Index>(size());
  const Eigen::MatrixXd xp = solver_->solve(Eigen::MatrixXd::Identity(n, n));
  return perm_.transpose() * xp * perm_;
}

CarPrecision::CarPrecision(const RegionGraph& graph, double rho)
    : structure_(graph), rho_(rho), q_(), factor_() {
  check_rho(rho);
  q_ = structure_.precision(rho);
  factor_ = structure_.factor(rho);
}

}  // namespace sae
