#include "prefield/optimize.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "prefield/errors.hpp"

namespace prefield {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double safe_eval(const Objective& f, const Eigen::VectorXd& x) {
  try {
    const double v = f(x);
    return std::isfinite(v) ? v : kInf;
  } catch (const NumericalError&) {
    return kInf;
  }
}

double step_for(double xi, double rel_step) { return rel_step * (1.0 + std::abs(xi)); }

}  // namespace

Eigen::VectorXd fd_gradient(const Objective& f, const Eigen::VectorXd& x, double fx, double rel_step,
                            Eigen::VectorXd* diag, int* evals) {
  const int k = static_cast<int>(x.size());
  Eigen::VectorXd g(k);
  if (diag) diag->setConstant(k, std::numeric_limits<double>::quiet_NaN());
  for (int i = 0; i < k; ++i) {
    const double h = step_for(x[i], rel_step);
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fp = safe_eval(f, xp);
    const double fm = safe_eval(f, xm);
    if (evals) *evals += 2;
    if (std::isfinite(fp) && std::isfinite(fm)) {
      g[i] = (fp - fm) / (2.0 * h);
      if (diag) (*diag)[i] = (fp - 2.0 * fx + fm) / (h * h);
    } else if (std::isfinite(fp)) {
      g[i] = (fp - fx) / h;
    } else if (std::isfinite(fm)) {
      g[i] = (fx - fm) / h;
    } else {
      std::ostringstream os;
      os << "finite-difference gradient: objective not finite on either side of coordinate " << i;
      throw NumericalError(os.str());
    }
  }
  return g;
}

Eigen::MatrixXd fd_hessian(const Objective& f, const Eigen::VectorXd& x, double fx, double rel_step,
                           int* evals) {
  const int k = static_cast<int>(x.size());
  Eigen::VectorXd h(k);
  for (int i = 0; i < k; ++i) h[i] = step_for(x[i], rel_step);
  const auto at = [&](int i, double si, int j, double sj) {
    Eigen::VectorXd y = x;
    y[i] += si * h[i];
    if (j >= 0) y[j] += sj * h[j];
    if (evals) ++*evals;
    const double v = safe_eval(f, y);
    if (!std::isfinite(v)) throw NumericalError("finite-difference Hessian: objective not finite");
    return v;
  };
  Eigen::MatrixXd hess(k, k);
  for (int i = 0; i < k; ++i) {
    hess(i, i) = (at(i, 1, -1, 0) - 2.0 * fx + at(i, -1, -1, 0)) / (h[i] * h[i]);
    for (int j = 0; j < i; ++j) {
      const double v = (at(i, 1, j, 1) - at(i, 1, j, -1) - at(i, -1, j, 1) + at(i, -1, j, -1)) /
                       (4.0 * h[i] * h[j]);
      hess(i, j) = hess(j, i) = v;
    }
  }
  return hess;
}

OptimizeResult minimize_bfgs(const Objective& f, const Eigen::VectorXd& x0,
                             const OptimizeOptions& options) {
  OptimizeResult res;
  const int k = static_cast<int>(x0.size());
  res.x = x0;
  res.f = safe_eval(f, x0);
  res.evaluations = 1;
  if (!std::isfinite(res.f)) throw NumericalError("optimizer: objective is not finite at the start");
  if (k == 0) {
    res.converged = true;
    res.message = "no free parameters";
    return res;
  }

  const auto initial_inverse = [&](const Eigen::VectorXd& curv) {
    Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < k; ++i) {
      const double c = curv[i];
      inv(i, i) = (std::isfinite(c) && c > 1e-12) ? 1.0 / c : 1.0;
    }
    return inv;
  };

  // Curvature for the initial scaling comes from a coarser probe than the gradient: with the
  // gradient step, weakly identified coordinates show only rounding noise.
  Eigen::VectorXd curv;
  fd_gradient(f, res.x, res.f, options.curvature_step, &curv, &res.fd_probes);
  Eigen::VectorXd g = fd_gradient(f, res.x, res.f, options.fd_step, nullptr, &res.fd_probes);
  Eigen::MatrixXd hinv = initial_inverse(curv);
  int small_steps = 0;
  bool fresh = true;  // hinv was just reset

  while (true) {
    if (res.evaluations >= options.max_evals) {
      res.message = "evaluation limit reached";
      break;
    }
    Eigen::VectorXd dir = -hinv * g;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      hinv = initial_inverse(curv);
      dir = -hinv * g;
      slope = g.dot(dir);
      fresh = true;
      if (!(slope < 0.0)) {
        res.converged = g.lpNorm<Eigen::Infinity>() == 0.0;
        res.message = "no descent direction";
        break;
      }
    }

    double t = 1.0;
    double ft = kInf;
    Eigen::VectorXd xt;
    bool accepted = false;
    for (int ls = 0; ls < options.max_backtracks && res.evaluations < options.max_evals; ++ls) {
      xt = res.x + t * dir;
      ft = safe_eval(f, xt);
      ++res.evaluations;
      if (ft <= res.f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (!fresh) {
        hinv = initial_inverse(curv);
        fresh = true;
        continue;
      }
      // Even a steepest-descent-like step fails: the finite-difference gradient is at noise level.
      res.converged = small_steps > 0 || std::abs(slope) < options.rel_tol * (1.0 + std::abs(res.f));
      res.message = "line search failed";
      break;
    }

    ++res.iterations;
    const double rel_change = (res.f - ft) / std::max(1.0, std::abs(ft));
    Eigen::VectorXd g_new = fd_gradient(f, xt, ft, options.fd_step, nullptr, &res.fd_probes);
    const Eigen::VectorXd s = xt - res.x;
    const Eigen::VectorXd y = g_new - g;
    res.x = xt;
    res.f = ft;
    g = g_new;

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh) {
        // Shanno-Phua scaling of the first update.
        hinv *= sy / y.squaredNorm();
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd ident = Eigen::MatrixXd::Identity(k, k);
      hinv = (ident - rho * s * y.transpose()) * hinv * (ident - rho * y * s.transpose()) +
             rho * s * s.transpose();
      fresh = false;
    }

    // A flat stretch alone is not convergence: the quadratic model must also predict no
    // further decrease worth having.
    const double predicted = 0.5 * g.dot(hinv * g);
    const double scale = std::max(1.0, std::abs(res.f));
    small_steps = rel_change < options.rel_tol ? small_steps + 1 : 0;
    if (small_steps >= 2 && !(predicted > options.rel_tol * scale)) {
      res.converged = true;
      res.message = "relative change below tolerance";
      break;
    }
  }
  return res;
}

}  // namespace prefield
