#include "prefield/fem.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include "prefield/errors.hpp"

namespace prefield {

namespace {

using Triplet = Eigen::Triplet<double>;

double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

double checked_area(const Mesh& mesh, int t) {
  const Triangle& tri = mesh.triangles()[static_cast<std::size_t>(t)];
  const double area =
      std::abs(signed_area(mesh.vertex(tri[0]), mesh.vertex(tri[1]), mesh.vertex(tri[2])));
  const Vec2 span = mesh.domain().width() > 0 ? Vec2(mesh.domain().width(), mesh.domain().height())
                                              : Vec2(1.0, 1.0);
  if (!(area > 1e-14 * span.x() * span.y())) {
    std::ostringstream os;
    os << "degenerate triangle " << t << " (vertices " << tri[0] << ", " << tri[1] << ", "
       << tri[2] << ") has zero area";
    throw DataError(os.str());
  }
  return area;
}

}  // namespace

SpMat FemMatrices::M0() const {
  SpMat m(size(), size());
  m.reserve(Eigen::VectorXi::Constant(size(), 1));
  for (int i = 0; i < size(); ++i) m.insert(i, i) = c_lumped[i];
  m.makeCompressed();
  return m;
}

FemMatrices assemble_fem(const Mesh& mesh) {
  const int m = mesh.vertex_count();
  FemMatrices fem;
  fem.c_lumped = Eigen::VectorXd::Zero(m);
  std::vector<Triplet> triplets;
  triplets.reserve(9 * static_cast<std::size_t>(mesh.triangle_count()));

  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const Triangle& tri = mesh.triangles()[static_cast<std::size_t>(t)];
    const double area = checked_area(mesh, t);
    // Gradient of the P1 basis function at vertex k is the rotated opposite edge / (2 area).
    std::array<Vec2, 3> edge;
    for (int k = 0; k < 3; ++k)
      edge[k] = mesh.vertex(tri[(k + 2) % 3]) - mesh.vertex(tri[(k + 1) % 3]);
    for (int i = 0; i < 3; ++i) {
      fem.c_lumped[tri[i]] += area / 3.0;
      for (int j = 0; j < 3; ++j)
        triplets.emplace_back(tri[i], tri[j], edge[i].dot(edge[j]) / (4.0 * area));
    }
  }
  fem.G.resize(m, m);
  fem.G.setFromTriplets(triplets.begin(), triplets.end());
  fem.G.makeCompressed();

  const Eigen::VectorXd inv_c = fem.c_lumped.cwiseInverse();
  SpMat cinv_g = inv_c.asDiagonal() * fem.G;
  fem.M2 = SpMat(fem.G * cinv_g);
  fem.M3 = SpMat(fem.M2 * cinv_g);
  fem.M2.makeCompressed();
  fem.M3.makeCompressed();
  return fem;
}

SpMat consistent_mass(const Mesh& mesh) {
  const int m = mesh.vertex_count();
  std::vector<Triplet> triplets;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const Triangle& tri = mesh.triangles()[static_cast<std::size_t>(t)];
    const double area = checked_area(mesh, t);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        triplets.emplace_back(tri[i], tri[j], area / (i == j ? 6.0 : 12.0));
  }
  SpMat c(m, m);
  c.setFromTriplets(triplets.begin(), triplets.end());
  return c;
}

}  // namespace prefield
