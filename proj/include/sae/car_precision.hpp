#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <memory>
#include <span>

#include "sae/region_graph.hpp"

namespace sae {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Permutation = Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int>;

/// Throws Error{RhoOutOfRange} unless 0 <= rho < 1.
void check_rho(double rho);

class CarFactor;

/// Graph-level data shared by every Q(rho) = D - rho W on one graph: the
/// degree/adjacency pattern and a fill-reducing ordering computed once.
class CarStructure {
 public:
  explicit CarStructure(const RegionGraph& graph);

  std::size_t size() const noexcept { return n_; }
  const RegionGraph& graph() const noexcept { return *graph_; }
  const Permutation& ordering() const noexcept { return perm_; }

  /// Q(rho) in the original region order (lower and upper triangles stored).
  SparseMatrix precision(double rho) const;
  /// Sparse Cholesky of Q(rho); throws Error{RhoOutOfRange}.
  CarFactor factor(double rho) const;

  /// x^T Q(rho) x without forming Q.
  double quadratic_form(double rho, std::span<const double> x) const;

 private:
  std::shared_ptr<const RegionGraph> graph_;
  std::size_t n_;
  Permutation perm_;  // P such that P Q P^T is factorized
  std::shared_ptr<const SparseMatrix> w_permuted_;
};

/// Immutable Cholesky factorization P Q P^T = L L^T at one rho.
class CarFactor {
 public:
  double rho() const noexcept { return rho_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(perm_.size()); }
  double log_det() const noexcept { return log_det_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  /// x = L^{-T} e mapped back to region order, so Cov(x) = Q^{-1} when e ~ N(0, I).
  Eigen::VectorXd whiten_inverse(const Eigen::VectorXd& e) const;
  /// tr(Q^{-1} W), via solves against the columns of W.
  double trace_inverse_adjacency() const;
  /// Dense Q^{-1}; test and diagnostic use only.
  Eigen::MatrixXd dense_inverse() const;

 private:
  friend class CarStructure;
  using Solver = Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::NaturalOrdering<int>>;

  double rho_ = 0.0;
  double log_det_ = 0.0;
  Permutation perm_;
  std::shared_ptr<const SparseMatrix> w_permuted_;
  std::shared_ptr<const Solver> solver_;
};

/// Q(rho) = D - rho W on one graph together with its (eager) Cholesky factor.
class CarPrecision {
 public:
  CarPrecision(const RegionGraph& graph, double rho);

  double rho() const noexcept { return rho_; }
  const SparseMatrix& matrix() const noexcept { return q_; }
  const CarFactor& cholesky() const noexcept { return factor_; }
  const CarStructure& structure() const noexcept { return structure_; }

 private:
  CarStructure structure_;
  double rho_;
  SparseMatrix q_;
  CarFactor factor_;
};

inline CarPrecision car_precision(const RegionGraph& graph, double rho) {
  return CarPrecision(graph, rho);
}

}  // namespace sae
