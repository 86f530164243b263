#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "prefield/mesh.hpp"

namespace prefield {

using SpMat = Eigen::SparseMatrix<double>;

/// P1 finite-element matrices on a triangulation.
///
/// M0 is the lumped (row-sum) mass matrix C~, M1 the stiffness matrix G, M2 = G C~^-1 G and
/// M3 = M2 C~^-1 G. None of them depend on the field parameters, so they are assembled once
/// per mesh and recombined for every (phi, sigma2).
struct FemMatrices {
  Eigen::VectorXd c_lumped;  ///< diagonal of M0
  SpMat G;
  SpMat M2;
  SpMat M3;

  SpMat M0() const;
  int size() const { return static_cast<int>(c_lumped.size()); }
};

/// Assembles lumped mass and stiffness on `mesh`. Throws DataError naming the first triangle
/// with non-positive area.
FemMatrices assemble_fem(const Mesh& mesh);

/// Full (consistent) P1 mass matrix; used only to check the lumping.
SpMat consistent_mass(const Mesh& mesh);

}  // namespace prefield
