#include "prefield/linalg.hpp"

#include <cmath>
#include <sstream>

#include "prefield/errors.hpp"

namespace prefield {

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream & 0xffffffffu),
                    static_cast<std::uint32_t>(stream >> 32), 0x9e3779b9u};
  return Rng(seq);
}

Eigen::VectorXd standard_normals(Rng& rng, int n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z[i] = normal(rng);
  return z;
}

void SparseCholesky::analyze(const SpMat& a) {
  solver_.analyzePattern(a);
  analyzed_ = true;
  size_ = static_cast<int>(a.rows());
}

bool SparseCholesky::factorize(const SpMat& a) {
  if (!analyzed_ || a.rows() != size_) analyze(a);
  solver_.factorize(a);
  return solver_.info() == Eigen::Success;
}

bool SparseCholesky::compute(const SpMat& a) {
  analyze(a);
  return factorize(a);
}

double SparseCholesky::log_det() const {
  const auto& lmat = solver_.matrixL().nestedExpression();
  double acc = 0.0;
  for (int j = 0; j < lmat.outerSize(); ++j)
    for (Solver::MatrixType::InnerIterator it(lmat, j); it; ++it)
      if (it.row() == j) acc += std::log(it.value());
  return 2.0 * acc;
}

Eigen::VectorXd SparseCholesky::solve(const Eigen::VectorXd& b) const { return solver_.solve(b); }

Eigen::VectorXd SparseCholesky::sample_from_normals(const Eigen::VectorXd& z) const {
  Eigen::VectorXd y = solver_.matrixU().solve(z);
  return solver_.permutationPinv() * y;
}

double SparseCholesky::quadratic_inverse(const std::vector<std::pair<int, double>>& w) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(size_);
  const auto& perm = solver_.permutationP();
  for (const auto& [i, wi] : w) v[perm.indices()[i]] += wi;
  solver_.matrixL().solveInPlace(v);
  return v.squaredNorm();
}

Eigen::LLT<Eigen::MatrixXd> dense_cholesky_with_jitter(const Eigen::MatrixXd& cov, double jitter,
                                                       const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) return llt;
  Eigen::MatrixXd jittered = cov;
  jittered.diagonal().array() += jitter;
  llt.compute(jittered);
  if (llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << what << ": covariance matrix is not positive definite after jitter " << jitter
       << " (duplicate locations?)";
    throw NumericalError(os.str());
  }
  return llt;
}

double dense_log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace prefield
