#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "prefield/geometry.hpp"

namespace prefield {

using SpMat = Eigen::SparseMatrix<double>;
using Rng = std::mt19937_64;

/// Deterministic generator for (seed, stream) pairs; distinct streams give independent sequences.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

/// Vector of iid standard normals.
Eigen::VectorXd standard_normals(Rng& rng, int n);

/// Sparse LL^T factorization with fill-reducing ordering. The symbolic analysis can be reused
/// across factorizations that share a sparsity pattern.
class SparseCholesky {
 public:
  using Solver = Eigen::SimplicialLLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>>;

  void analyze(const SpMat& a);
  /// Numeric factorization; returns false when the matrix is not positive definite.
  bool factorize(const SpMat& a);
  /// analyze + factorize.
  bool compute(const SpMat& a);

  bool analyzed() const { return analyzed_; }
  int size() const { return size_; }

  double log_det() const;
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  /// x = P^-1 L^-T z, so that x ~ N(0, A^-1) when z ~ N(0, I).
  Eigen::VectorXd sample_from_normals(const Eigen::VectorXd& z) const;
  /// w^T A^-1 w for a sparse w given as (index, weight) pairs.
  double quadratic_inverse(const std::vector<std::pair<int, double>>& w) const;

 private:
  Solver solver_;
  bool analyzed_ = false;
  int size_ = 0;
};

/// Dense Cholesky of a covariance with a single jitter retry of `jitter` on the diagonal.
/// Throws NumericalError when the jittered matrix is still not positive definite.
Eigen::LLT<Eigen::MatrixXd> dense_cholesky_with_jitter(const Eigen::MatrixXd& cov, double jitter,
                                                       const char* what);

double dense_log_det(const Eigen::LLT<Eigen::MatrixXd>& llt);

}  // namespace prefield
