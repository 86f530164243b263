#pragma once

#include <functional>
#include <string>

#include <Eigen/Core>

namespace prefield {

/// Scalar objective over an unconstrained vector. May return +inf (or throw NumericalError,
/// which the optimizer maps to +inf) at points where it cannot be evaluated.
using Objective = std::function<double(const Eigen::VectorXd&)>;

struct OptimizeOptions {
  double rel_tol = 1e-6;    ///< relative objective change treated as converged
  int max_evals = 500;      ///< line-search evaluations; finite-difference probes are counted apart
  double fd_step = 1e-4;    ///< gradient step is fd_step * (1 + |x_i|)
  double curvature_step = 1e-2;  ///< probe step for the diagonal curvature that scales the start
  int max_backtracks = 25;
};

struct OptimizeResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iterations = 0;
  int evaluations = 0;   ///< line-search evaluations (including f(x0))
  int fd_probes = 0;     ///< finite-difference gradient evaluations
  bool converged = false;
  std::string message;
};

/// Central-difference gradient with step rel_step * (1 + |x_i|). When one side of a probe is
/// not finite the one-sided difference is used. `diag` (optional) receives the matching second
/// differences. Evaluation count is added to *evals when given.
Eigen::VectorXd fd_gradient(const Objective& f, const Eigen::VectorXd& x, double fx, double rel_step,
                            Eigen::VectorXd* diag = nullptr, int* evals = nullptr);

/// Central-difference Hessian (2 k^2 evaluations for k parameters).
Eigen::MatrixXd fd_hessian(const Objective& f, const Eigen::VectorXd& x, double fx, double rel_step,
                           int* evals = nullptr);

/// BFGS with backtracking Armijo line search and finite-difference gradients. The initial
/// inverse Hessian is the reciprocal of the finite-difference curvature diagonal, probed with
/// curvature_step; resets return to it.
/// Converged when the relative decrease stays below rel_tol on two consecutive iterations and
/// the quasi-Newton model predicts no larger relative decrease.
/// Throws NumericalError when f(x0) is not finite.
OptimizeResult minimize_bfgs(const Objective& f, const Eigen::VectorXd& x0,
                             const OptimizeOptions& options = {});

}  // namespace prefield
