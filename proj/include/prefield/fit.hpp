#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "prefield/laplace.hpp"
#include "prefield/likelihood.hpp"
#include "prefield/optimize.hpp"

namespace prefield {

/// Which parameters are held at their initial values.
class ParamMask {
 public:
  /// tau2 and c fixed, the rest free.
  static ParamMask defaults();
  static ParamMask all_fixed();
  static ParamMask all_free();

  bool fixed(ParamId id) const { return fixed_[static_cast<int>(id)]; }
  void set_fixed(ParamId id, bool value) { fixed_[static_cast<int>(id)] = value; }
  std::vector<ParamId> free_params() const;

  bool operator==(const ParamMask&) const = default;

 private:
  std::array<bool, kParamCount> fixed_{};
};

struct FitOptions {
  LaplaceOptions laplace;
  OptimizeOptions outer;
  /// Optimize log(p) for positive parameters; when false they are optimized directly.
  bool log_transform = true;
  bool compute_covariance = true;
  /// Relative step of the finite-difference Hessian used for standard errors.
  double hessian_step = 1e-3;
};

/// Per-parameter summary; standard errors are NaN for fixed parameters or when the observed
/// information is not positive definite.
struct Estimate {
  ParamId id;
  double value = 0.0;
  double std_error = 0.0;
  bool fixed = false;
};

struct PreferentialFit {
  ThetaFull theta;
  LaplaceResult laplace;  ///< inner solution at theta
  ParamMask mask;
  std::vector<ParamId> free;
  Eigen::MatrixXd covariance;  ///< free x free, natural scale
  bool covariance_ok = false;
  bool converged = false;
  int outer_iterations = 0;
  int evaluations = 0;   ///< laplace_nll calls, finite-difference probes included
  long inner_iterations = 0;
  double wall_seconds = 0.0;
  std::string message;

  double nll() const { return laplace.nll; }
  std::vector<Estimate> estimates() const;
  /// Correlation matrix of the free estimates (empty when the covariance is unavailable).
  Eigen::MatrixXd correlation() const;
};

/// Maximizes the Laplace marginal likelihood over the free parameters.
/// Throws NumericalError when laplace_nll(init) is not finite.
PreferentialFit fit_preferential(std::shared_ptr<const PreferentialModel> model, const ThetaFull& init,
                                 const ParamMask& mask, const FitOptions& options = {});
/// Convenience form; the gradient step is the mesh cell width.
PreferentialFit fit_preferential(const TrackSet& tracks, MeshPtr mesh, const ThetaFull& init,
                                 const ParamMask& mask, const FitOptions& options = {});

/// Exact Gaussian negative log-likelihood of all responses given their locations:
/// Y ~ N(mu 1, C + tau2 I) with Matern(kappa = 2) covariance C.
double standard_nll(const TrackSet& tracks, const FieldParams& params);

struct StandardFit {
  FieldParams params;
  double nll = 0.0;
  ParamMask mask;
  std::vector<ParamId> free;
  Eigen::MatrixXd covariance;
  bool covariance_ok = false;
  bool converged = false;
  int outer_iterations = 0;
  int evaluations = 0;
  double wall_seconds = 0.0;
  std::string message;

  std::vector<Estimate> estimates() const;
};

/// Maximizes the standard likelihood over the free field parameters (mu, tau2, phi, sigma2);
/// movement entries of the mask are ignored.
StandardFit fit_standard(const TrackSet& tracks, const FieldParams& init, const ParamMask& mask,
                         const FitOptions& options = {});

}  // namespace prefield
