#pragma once

#include <memory>

#include "prefield/gmrf.hpp"
#include "prefield/likelihood.hpp"
#include "prefield/linalg.hpp"

namespace prefield {

struct LaplaceOptions {
  double tol = 1e-8;  ///< max-norm of the inner gradient at exit
  int max_iter = 100;
};

struct LaplaceResult {
  double nll = 0.0;             ///< Laplace-approximated marginal negative log-likelihood
  double joint_nll = 0.0;       ///< joint NLL at the mode
  LatentState mode;
  double hessian_logdet = 0.0;  ///< log |H| at the mode
  double grad_norm = 0.0;       ///< max-norm of the inner gradient at exit
  int inner_iters = 0;
  bool converged = false;
};

/// Inner mode search and Laplace marginalization for one PreferentialModel.
///
/// The Hessian sparsity pattern is a property of the data alone, so the symbolic Cholesky
/// analysis is done once and reused by every factorization this object performs.
class LaplaceEngine {
 public:
  explicit LaplaceEngine(std::shared_ptr<const PreferentialModel> model, LaplaceOptions options = {});

  const PreferentialModel& model() const { return *model_; }
  const LaplaceOptions& options() const { return options_; }

  /// Damped Newton on (s, beta) from `init`. Never throws on non-convergence; the result is
  /// flagged instead. Throws NumericalError when Levenberg damping is exhausted.
  LaplaceResult inner_newton(const ThetaFull& theta, const PrecisionBundle& bundle,
                             const LatentState& init);

  /// Builds the precision for theta.field, finds the mode (starting from `warm_start` when given)
  /// and returns joint_nll(mode) + 1/2 log|H| - dim/2 log(2 pi).
  LaplaceResult laplace_nll(const ThetaFull& theta, const LatentState* warm_start = nullptr);

  /// Factorization of the Hessian at the mode of the most recent successful solve.
  const SparseCholesky& mode_factor() const { return factor_; }

 private:
  std::shared_ptr<const PreferentialModel> model_;
  LaplaceOptions options_;
  PrecisionBuilder precision_;
  SparseCholesky factor_;
};

/// Free-function forms of the engine operations.
LaplaceResult inner_newton(const ThetaFull& theta, std::shared_ptr<const PreferentialModel> model,
                           const PrecisionBundle& bundle, const LatentState& init,
                           const LaplaceOptions& options = {});
LaplaceResult laplace_nll(const ThetaFull& theta, std::shared_ptr<const PreferentialModel> model,
                          const LatentState* warm_start = nullptr, const LaplaceOptions& options = {});

}  // namespace prefield
