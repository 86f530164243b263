#include "prefield/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "prefield/errors.hpp"

namespace prefield {

double LinearForm::apply(const Eigen::VectorXd& values) const {
  double acc = 0.0;
  for (const auto& [i, w] : terms) acc += w * values[i];
  return acc;
}

void LinearForm::add(const LinearForm& other, double scale) {
  for (const auto& [i, w] : other.terms) {
    auto it = std::find_if(terms.begin(), terms.end(), [i = i](const auto& t) { return t.first == i; });
    if (it != terms.end())
      it->second += scale * w;
    else
      terms.emplace_back(i, scale * w);
  }
}

Mesh Mesh::lattice(const Rect& domain, int rows, int cols) {
  if (rows < 2 || cols < 2) throw ConfigError("lattice mesh needs at least 2 rows and 2 columns");
  if (!(domain.width() > 0.0) || !(domain.height() > 0.0))
    throw ConfigError("lattice mesh domain has zero width or height");

  Mesh mesh;
  mesh.rows_ = rows;
  mesh.cols_ = cols;
  mesh.domain_ = domain;
  mesh.dx_ = domain.width() / (cols - 1);
  mesh.dy_ = domain.height() / (rows - 1);
  mesh.vertices_.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    // Pin the last row/column to the exact boundary so hull tests are not at the mercy of rounding.
    const double y = (r == rows - 1) ? domain.ymax : domain.ymin + r * mesh.dy_;
    for (int c = 0; c < cols; ++c) {
      const double x = (c == cols - 1) ? domain.xmax : domain.xmin + c * mesh.dx_;
      mesh.vertices_.emplace_back(x, y);
    }
  }
  mesh.triangles_.reserve(2 * static_cast<std::size_t>(rows - 1) * (cols - 1));
  for (int r = 0; r + 1 < rows; ++r) {
    for (int c = 0; c + 1 < cols; ++c) {
      const int v00 = mesh.index(r, c);
      const int v01 = mesh.index(r, c + 1);
      const int v10 = mesh.index(r + 1, c);
      const int v11 = mesh.index(r + 1, c + 1);
      mesh.triangles_.push_back({v00, v01, v11});
      mesh.triangles_.push_back({v00, v11, v10});
    }
  }
  return mesh;
}

Mesh Mesh::covering(const Rect& region, double spacing) {
  if (!(spacing > 0.0)) throw ConfigError("lattice spacing must be positive");
  const int cols = std::max(2, static_cast<int>(std::ceil(region.width() / spacing - 1e-9)) + 1);
  const int rows = std::max(2, static_cast<int>(std::ceil(region.height() / spacing - 1e-9)) + 1);
  const double w = (cols - 1) * spacing;
  const double h = (rows - 1) * spacing;
  const double cx = 0.5 * (region.xmin + region.xmax);
  const double cy = 0.5 * (region.ymin + region.ymax);
  return lattice({cx - 0.5 * w, cx + 0.5 * w, cy - 0.5 * h, cy + 0.5 * h}, rows, cols);
}

Mesh::Mesh(std::vector<Vec2> vertices, std::vector<Triangle> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
  if (vertices_.empty()) throw DataError("mesh has no vertices");
  domain_ = {vertices_[0].x(), vertices_[0].x(), vertices_[0].y(), vertices_[0].y()};
  for (const auto& v : vertices_) domain_ = domain_.united({v.x(), v.x(), v.y(), v.y()});
  for (std::size_t t = 0; t < triangles_.size(); ++t)
    for (int v : triangles_[t])
      if (v < 0 || v >= vertex_count()) {
        std::ostringstream os;
        os << "triangle " << t << " references vertex " << v << " out of range";
        throw DataError(os.str());
      }
}

namespace {

std::optional<Barycentric> locate_general(const std::vector<Vec2>& vertices,
                                          const std::vector<Triangle>& triangles, const Vec2& x) {
  constexpr double tol = 1e-12;
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    const Vec2& a = vertices[static_cast<std::size_t>(triangles[t][0])];
    const Vec2& b = vertices[static_cast<std::size_t>(triangles[t][1])];
    const Vec2& c = vertices[static_cast<std::size_t>(triangles[t][2])];
    const double det = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
    if (det == 0.0) continue;
    const double l1 = ((x.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (x.y() - a.y())) / det;
    const double l2 = ((b.x() - a.x()) * (x.y() - a.y()) - (x.x() - a.x()) * (b.y() - a.y())) / det;
    const double l0 = 1.0 - l1 - l2;
    if (l0 >= -tol && l1 >= -tol && l2 >= -tol) {
      Barycentric hit;
      hit.triangle = static_cast<int>(t);
      hit.vertex = triangles[t];
      hit.weight = {l0, l1, l2};
      return hit;
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<Barycentric> Mesh::try_locate(const Vec2& x) const {
  if (!std::isfinite(x.x()) || !std::isfinite(x.y())) return std::nullopt;
  if (!is_lattice()) return locate_general(vertices_, triangles_, x);

  const double tol = 1e-9 * std::max(dx_, dy_);
  if (!domain_.contains(x, tol)) return std::nullopt;
  double u = (x.x() - domain_.xmin) / dx_;
  double v = (x.y() - domain_.ymin) / dy_;
  int c = std::clamp(static_cast<int>(std::floor(u)), 0, cols_ - 2);
  int r = std::clamp(static_cast<int>(std::floor(v)), 0, rows_ - 2);
  double fx = std::clamp(u - c, 0.0, 1.0);
  double fy = std::clamp(v - r, 0.0, 1.0);

  const int v00 = index(r, c);
  const int v01 = index(r, c + 1);
  const int v10 = index(r + 1, c);
  const int v11 = index(r + 1, c + 1);
  const int cell = r * (cols_ - 1) + c;
  Barycentric hit;
  if (fx >= fy) {
    hit.triangle = 2 * cell;
    hit.vertex = {v00, v01, v11};
    hit.weight = {1.0 - fx, fx - fy, fy};
  } else {
    hit.triangle = 2 * cell + 1;
    hit.vertex = {v00, v11, v10};
    hit.weight = {1.0 - fy, fx, fy - fx};
  }
  return hit;
}

Barycentric Mesh::locate(const Vec2& x) const {
  auto hit = try_locate(x);
  if (!hit) {
    std::ostringstream os;
    os << "point (" << x.x() << ", " << x.y() << ") is outside the mesh hull";
    throw OutOfHullError(os.str());
  }
  return *hit;
}

LinearForm interpolation_form(const Mesh& mesh, const Vec2& x) {
  const Barycentric hit = mesh.locate(x);
  LinearForm form;
  form.terms.reserve(3);
  for (int k = 0; k < 3; ++k) form.terms.emplace_back(hit.vertex[k], hit.weight[k]);
  return form;
}

std::array<LinearForm, 2> gradient_forms(const Mesh& mesh, const Vec2& x, double h) {
  if (!(h > 0.0)) throw ConfigError("gradient step must be positive");
  std::array<LinearForm, 2> grad;
  const double inv = 1.0 / (2.0 * h);
  for (int d = 0; d < 2; ++d) {
    Vec2 e = Vec2::Zero();
    e[d] = h;
    grad[d].terms.reserve(6);
    grad[d].add(interpolation_form(mesh, x + e), inv);
    grad[d].add(interpolation_form(mesh, x - e), -inv);
  }
  return grad;
}

}  // namespace prefield
