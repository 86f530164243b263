#include "prefield/laplace.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "prefield/errors.hpp"

namespace prefield {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

SpMat assemble(const std::vector<Eigen::Triplet<double>>& triplets, int n) {
  SpMat h(n, n);
  h.setFromTriplets(triplets.begin(), triplets.end());
  return h;
}

}  // namespace

LaplaceEngine::LaplaceEngine(std::shared_ptr<const PreferentialModel> model, LaplaceOptions options)
    : model_(std::move(model)), options_(options), precision_(model_->fem()) {}

LaplaceResult LaplaceEngine::inner_newton(const ThetaFull& theta, const PrecisionBundle& bundle,
                                          const LatentState& init) {
  const PreferentialModel& model = *model_;
  const int n = model.latent_dim();
  Eigen::VectorXd z = model.pack(init);
  Eigen::VectorXd grad(n);
  std::vector<Eigen::Triplet<double>> triplets;

  double f = model.evaluate(z, theta, bundle, &grad, &triplets);
  SpMat h = assemble(triplets, n);
  if (!factor_.analyzed() || factor_.size() != n) factor_.analyze(h);

  double diag_scale = 1.0;
  for (int j = 0; j < h.outerSize(); ++j)
    for (SpMat::InnerIterator it(h, j); it; ++it)
      if (it.row() == it.col()) diag_scale = std::max(diag_scale, std::abs(it.value()));
  const double first_damping = 1e-8 * diag_scale;
  const double max_damping = 1e12 * diag_scale;

  LaplaceResult result;
  bool factor_holds_h = false;  // factor_ is the undamped factorization of h at z
  for (int iter = 0;; ++iter) {
    result.grad_norm = grad.lpNorm<Eigen::Infinity>();
    result.inner_iters = iter;
    const bool pd = factor_.factorize(h);
    factor_holds_h = pd;
    if (result.grad_norm <= options_.tol && pd) {
      result.converged = true;
      break;
    }
    if (iter >= options_.max_iter) break;

    // Newton step; Levenberg damping escalates while H is indefinite or the step fails to
    // decrease the objective.
    double damping = pd ? 0.0 : first_damping;
    bool moved = false;
    bool stalled = false;
    while (!moved && !stalled) {
      if (damping > max_damping) {
        std::ostringstream os;
        os << "inner Newton: damping exhausted at iteration " << iter << " (gradient norm "
           << result.grad_norm << ")";
        throw NumericalError(os.str());
      }
      bool ok = pd;
      if (damping > 0.0) {
        SpMat damped = h;
        for (int i = 0; i < n; ++i) damped.coeffRef(i, i) += damping;
        ok = factor_.factorize(damped);
        factor_holds_h = false;
      }
      const auto escalate = [&] { damping = damping == 0.0 ? first_damping : 10.0 * damping; };
      if (!ok) {
        escalate();
        continue;
      }
      const Eigen::VectorXd dir = -factor_.solve(grad);
      const double slope = grad.dot(dir);
      if (!dir.allFinite() || !(slope < 0.0)) {
        escalate();
        continue;
      }
      // Predicted decrease below what f can resolve: the mode is found to rounding.
      if (-slope < 1e-15 * (1.0 + std::abs(f))) {
        stalled = true;
        break;
      }
      double t = 1.0;
      for (int ls = 0; ls < 30 && !moved; ++ls, t *= 0.5) {
        const Eigen::VectorXd trial = z + t * dir;
        double ft = 0.0;
        try {
          ft = model.evaluate(trial, theta, bundle, nullptr, nullptr);
        } catch (const NumericalError&) {
          continue;
        }
        if (ft <= f + 1e-4 * t * slope) {
          z = trial;
          moved = true;
        }
      }
      if (!moved) escalate();
    }
    if (stalled) {
      result.converged = pd;
      break;
    }
    f = model.evaluate(z, theta, bundle, &grad, &triplets);
    h = assemble(triplets, n);
  }

  // Laplace terms need the undamped Hessian at the returned point.
  if (!factor_holds_h && !factor_.factorize(h))
    throw NumericalError("inner Newton: Hessian at the mode is not positive definite");
  result.joint_nll = f;
  result.hessian_logdet = factor_.log_det();
  result.nll = f + 0.5 * result.hessian_logdet - 0.5 * n * kLog2Pi;
  result.mode = model.unpack(z);
  return result;
}

LaplaceResult LaplaceEngine::laplace_nll(const ThetaFull& theta, const LatentState* warm_start) {
  const PrecisionBundle bundle = precision_.build(theta.field);
  const LatentState init = warm_start ? *warm_start : model_->initial_state(theta);
  return inner_newton(theta, bundle, init);
}

LaplaceResult inner_newton(const ThetaFull& theta, std::shared_ptr<const PreferentialModel> model,
                           const PrecisionBundle& bundle, const LatentState& init,
                           const LaplaceOptions& options) {
  LaplaceEngine engine(std::move(model), options);
  return engine.inner_newton(theta, bundle, init);
}

LaplaceResult laplace_nll(const ThetaFull& theta, std::shared_ptr<const PreferentialModel> model,
                          const LatentState* warm_start, const LaplaceOptions& options) {
  LaplaceEngine engine(std::move(model), options);
  return engine.laplace_nll(theta, warm_start);
}

}  // namespace prefield
