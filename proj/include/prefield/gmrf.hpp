#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "prefield/fem.hpp"
#include "prefield/linalg.hpp"
#include "prefield/mesh.hpp"
#include "prefield/params.hpp"

namespace prefield {

/// Sparse precision of the kappa = 2 (SPDE exponent 3) Matern GMRF.
///
/// Q = scale_const * (phi^-6 M0 + 3 phi^-4 M1 + 3 phi^-2 M2 + M2 M0^-1 M1), where the
/// bracketed operator has stationary variance phi^4 / (8 pi) in the plane, so
/// scale_const = phi^4 / (8 pi sigma2) targets marginal variance sigma2 away from the
/// (Neumann) mesh boundary.
struct PrecisionBundle {
  SpMat Q;
  double phi = 0.0;
  double sigma2 = 0.0;
  double scale_const = 0.0;
  double log_det = 0.0;
  std::shared_ptr<const SparseCholesky> factor;
};

/// phi^-6 M0 + 3 phi^-4 M1 + 3 phi^-2 M2 + M3 (unit scaling).
SpMat spde_operator(const FemMatrices& fem, double phi);

/// Throws ConfigError unless kappa == 2, NumericalError when Q is not SPD.
PrecisionBundle build_precision(const FemMatrices& fem, const FieldParams& params);

/// Repeated precision builds on one mesh. The symbolic analysis of Q is shared by all builds,
/// and the operator and its log-determinant are kept for the most recent phi, so a build that
/// changes only sigma2 costs no factorization. Bundles from here carry no `factor`.
class PrecisionBuilder {
 public:
  explicit PrecisionBuilder(const FemMatrices& fem) : fem_(&fem) {}
  PrecisionBundle build(const FieldParams& params);

 private:
  const FemMatrices* fem_;
  SparseCholesky factor_;
  double phi_ = 0.0;
  SpMat unit_;
  double unit_log_det_ = 0.0;
};

/// Mesh-extension margin recommended for a field of scale phi (in distance units).
inline double boundary_margin(double phi, double margin_in_phi = 2.0) { return margin_in_phi * phi; }

/// Field values at the vertices of a mesh.
struct FieldRealization {
  MeshPtr mesh;
  Eigen::VectorXd values;
};

/// Draws S ~ N(0, Q^-1) by back-substitution of standard normals through the Cholesky factor.
FieldRealization sample_field(const PrecisionBundle& bundle, MeshPtr mesh, std::uint64_t seed);

/// Dense Matern covariance matrix at `locations`.
Eigen::MatrixXd matern_matrix(const std::vector<Vec2>& locations, const FieldParams& params);

/// Exact Gaussian-process sampler with Matern covariance. The Cholesky factor is computed once,
/// so repeated draws at the same locations are cheap.
class DenseGaussianSampler {
 public:
  DenseGaussianSampler(const std::vector<Vec2>& locations, const FieldParams& params);
  Eigen::VectorXd draw(Rng& rng) const;
  int size() const { return static_cast<int>(slot_.size()); }

 private:
  Eigen::MatrixXd lower_;
  std::vector<int> slot_;
};

/// Single exact draw from N(0, C) with C_ij = matern_cov(|x_i - x_j|).
Eigen::VectorXd dense_gp_draw(const std::vector<Vec2>& locations, const FieldParams& params,
                              std::uint64_t seed);

/// Piecewise-linear value of the realization at x. Throws OutOfHullError outside the mesh.
double interpolate_field(const FieldRealization& field, const Vec2& x);

}  // namespace prefield
