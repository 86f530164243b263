#pragma once

#include <algorithm>

#include <Eigen/Core>

namespace prefield {

using Vec2 = Eigen::Vector2d;

/// Axis-aligned rectangle [xmin, xmax] x [ymin, ymax].
struct Rect {
  double xmin = 0.0;
  double xmax = 0.0;
  double ymin = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }

  bool contains(const Vec2& p, double tol = 0.0) const {
    return p.x() >= xmin - tol && p.x() <= xmax + tol && p.y() >= ymin - tol &&
           p.y() <= ymax + tol;
  }

  Rect expanded(double margin) const {
    return {xmin - margin, xmax + margin, ymin - margin, ymax + margin};
  }

  /// Smallest rectangle containing both.
  Rect united(const Rect& other) const;

  bool operator==(const Rect&) const = default;
};

inline Rect Rect::united(const Rect& other) const {
  return {std::min(xmin, other.xmin), std::max(xmax, other.xmax),
          std::min(ymin, other.ymin), std::max(ymax, other.ymax)};
}

}  // namespace prefield
