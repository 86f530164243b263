#pragma once

#include <array>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "prefield/geometry.hpp"

namespace prefield {

using Triangle = std::array<int, 3>;

/// Containing triangle of a point together with its barycentric weights.
struct Barycentric {
  int triangle = -1;
  std::array<int, 3> vertex{};
  std::array<double, 3> weight{};
};

/// Sparse linear functional over mesh-vertex values: sum_i w_i * s[idx_i].
struct LinearForm {
  std::vector<std::pair<int, double>> terms;

  double apply(const Eigen::VectorXd& values) const;
  /// Adds scale * other, merging repeated indices.
  void add(const LinearForm& other, double scale);
};

/// Triangulated planar domain. Lattice meshes (the only kind the toolkit generates) split each
/// rectangular cell into two right triangles along the (r,c)-(r+1,c+1) diagonal and number
/// vertices row-major: index = row * cols + col, x increasing with col, y with row.
class Mesh {
 public:
  /// Regular rows x cols lattice over `domain`. Throws ConfigError for rows/cols < 2 or a
  /// degenerate domain.
  static Mesh lattice(const Rect& domain, int rows, int cols);

  /// Smallest lattice with spacing <= `spacing` that covers `region`, centred on it.
  static Mesh covering(const Rect& region, double spacing);

  /// General triangulation (no fast point location).
  Mesh(std::vector<Vec2> vertices, std::vector<Triangle> triangles);

  int vertex_count() const { return static_cast<int>(vertices_.size()); }
  int triangle_count() const { return static_cast<int>(triangles_.size()); }
  const std::vector<Vec2>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const Vec2& vertex(int i) const { return vertices_[static_cast<std::size_t>(i)]; }

  bool is_lattice() const { return rows_ > 0; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  /// Bounding rectangle of the vertices.
  const Rect& domain() const { return domain_; }
  double dx() const { return dx_; }
  double dy() const { return dy_; }
  /// Lattice cell width (min of dx, dy).
  double cell_width() const { return std::min(dx_, dy_); }

  int index(int row, int col) const { return row * cols_ + col; }

  std::optional<Barycentric> try_locate(const Vec2& x) const;
  /// Throws OutOfHullError when x is outside the mesh.
  Barycentric locate(const Vec2& x) const;
  bool contains(const Vec2& x) const { return try_locate(x).has_value(); }

 private:
  Mesh() = default;

  std::vector<Vec2> vertices_;
  std::vector<Triangle> triangles_;
  Rect domain_{};
  int rows_ = 0;
  int cols_ = 0;
  double dx_ = 0.0;
  double dy_ = 0.0;
};

using MeshPtr = std::shared_ptr<const Mesh>;

/// Piecewise-linear interpolation functional at x (three vertices).
LinearForm interpolation_form(const Mesh& mesh, const Vec2& x);

/// Central-difference gradient functionals of the P1 interpolant with step h:
/// d/dx ~ (S(x+h e1) - S(x-h e1)) / 2h and likewise for y.
/// Throws OutOfHullError when any stencil point leaves the hull.
std::array<LinearForm, 2> gradient_forms(const Mesh& mesh, const Vec2& x, double h);

}  // namespace prefield
