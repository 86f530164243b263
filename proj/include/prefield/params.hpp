#pragma once

#include <Eigen/Core>

namespace prefield {

/// Latent field parameters: constant mean, nugget, Matern smoothness/scale/variance.
struct FieldParams {
  double mu = 0.0;      ///< field mean (response units)
  double tau2 = 0.0;    ///< nugget variance
  double kappa = 2.0;   ///< Matern smoothness; inference paths require 2
  double phi = 1.0;     ///< Matern scale (distance units)
  double sigma2 = 1.0;  ///< marginal variance

  /// Throws ConfigError on phi <= 0, sigma2 <= 0, tau2 < 0, kappa <= 0 or non-finite values.
  void validate() const;
  bool operator==(const FieldParams&) const = default;
};

/// Preferential correlated random walk parameters.
struct MovementParams {
  double alpha = 0.0;        ///< preferential strength
  double c = 0.0;            ///< offset added to the field level in the foraging term
  double sigma_beta = 0.1;   ///< behavioural-state diffusion
  Eigen::Matrix2d sigma = Eigen::Matrix2d::Identity();  ///< location noise loading (multiplies A_k)
  double beta0 = 0.0;        ///< initial behavioural state

  void validate() const;
};

/// Full parameter vector (field block followed by movement block).
struct ThetaFull {
  FieldParams field;
  MovementParams movement;
};

}  // namespace prefield
