#pragma once

#include <cmath>
#include <memory>

#include "prefield/gmrf.hpp"
#include "prefield/likelihood.hpp"
#include "prefield/mesh.hpp"
#include "prefield/movement.hpp"

namespace fixture {

using namespace prefield;

/// 5x5 lattice on [0,4]^2 (25 vertices).
inline MeshPtr toy_mesh() { return std::make_shared<const Mesh>(Mesh::lattice({0, 4, 0, 4}, 5, 5)); }

/// One track of six observations well inside the toy mesh.
inline Track toy_track() {
  Track t;
  t.id = 1;
  t.times = {0.0, 0.4, 0.9, 1.2, 1.8, 2.1};
  t.locations = {{1.2, 1.1}, {1.5, 1.6}, {2.1, 1.8}, {2.4, 2.5}, {2.2, 2.9}, {2.8, 2.7}};
  t.responses = {4.2, 5.1, 4.7, 5.6, 5.3, 4.9};
  return t;
}

inline ThetaFull toy_theta(double alpha = 0.0) {
  ThetaFull th;
  th.field = {5.0, 0.2, 2.0, 1.5, 1.3};
  th.movement.alpha = alpha;
  th.movement.c = 0.0;
  th.movement.sigma_beta = 0.7;
  th.movement.sigma << 0.8, 0.0, 0.1, 0.6;
  th.movement.beta0 = -0.5;
  return th;
}

inline constexpr double kToyGradStep = 0.5;

inline std::shared_ptr<const PreferentialModel> toy_model() {
  return std::make_shared<const PreferentialModel>(toy_mesh(), TrackSet{toy_track()}, kToyGradStep);
}

/// 21x21 lattice over [-150,150]^2 (spacing 15) extended by 2 phi at the same spacing.
inline Mesh matern_check_mesh(double phi) {
  const double h = 15.0;
  const int extra = static_cast<int>(std::ceil(2.0 * phi / h));
  const double half = 150.0 + extra * h;
  const int n = 21 + 2 * extra;
  return Mesh::lattice({-half, half, -half, half}, n, n);
}

/// Vertices at least 2 phi inside the declared [-150,150]^2 domain.
inline bool matern_check_interior(const Vec2& p, double phi) {
  const double lim = 150.0 - 2.0 * phi + 1e-9;
  return std::abs(p.x()) <= lim && std::abs(p.y()) <= lim;
}

}  // namespace fixture
