#pragma once

// Dense reference computations used by the tests. None of these call into the library's
// likelihood, Laplace or FEM code; they work from vertex coordinates and raw formulas.

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "prefield/mesh.hpp"
#include "prefield/movement.hpp"
#include "prefield/params.hpp"

namespace oracle {

using prefield::Vec2;

inline constexpr double kLog2Pi = 1.8378770664093453;

/// Lattice geometry recovered from the vertex list only.
struct Grid {
  double x0, y0, dx, dy;
  int rows, cols;

  explicit Grid(const prefield::Mesh& mesh) {
    rows = mesh.rows();
    cols = mesh.cols();
    x0 = mesh.vertex(0).x();
    y0 = mesh.vertex(0).y();
    dx = (mesh.vertex(cols - 1).x() - x0) / (cols - 1);
    dy = (mesh.vertex((rows - 1) * cols).y() - y0) / (rows - 1);
  }

  /// P1 weights of the right-triangle split along the (r,c)-(r+1,c+1) diagonal, as a dense row.
  Eigen::RowVectorXd weights(const Vec2& p) const {
    double u = (p.x() - x0) / dx;
    double v = (p.y() - y0) / dy;
    int c = std::min(static_cast<int>(std::floor(u)), cols - 2);
    int r = std::min(static_cast<int>(std::floor(v)), rows - 2);
    u -= c;
    v -= r;
    Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(rows * cols);
    const int i00 = r * cols + c, i10 = i00 + 1, i01 = i00 + cols, i11 = i01 + 1;
    if (u >= v) {
      w[i00] += 1.0 - u;
      w[i10] += u - v;
      w[i11] += v;
    } else {
      w[i00] += 1.0 - v;
      w[i01] += v - u;
      w[i11] += u;
    }
    return w;
  }

  double value(const Eigen::VectorXd& s, const Vec2& p) const { return weights(p).dot(s); }

  Vec2 gradient(const Eigen::VectorXd& s, const Vec2& p, double h) const {
    return {(value(s, p + Vec2(h, 0)) - value(s, p - Vec2(h, 0))) / (2 * h),
            (value(s, p + Vec2(0, h)) - value(s, p - Vec2(0, h))) / (2 * h)};
  }
};

inline double logistic(double b) { return 1.0 / (1.0 + std::exp(-b)); }

inline double normal_nll(double x, double mean, double var) {
  return 0.5 * (kLog2Pi + std::log(var)) + 0.5 * (x - mean) * (x - mean) / var;
}

struct Blocks {
  double response = 0, movement = 0, states = 0, field = 0;
  double total() const { return response + movement + states + field; }
};

/// Independent evaluation of the four joint blocks for a dense precision `q`.
/// beta is the concatenation over tracks of one state per observation.
inline Blocks joint_blocks(const Grid& grid, const Eigen::MatrixXd& q, const prefield::TrackSet& tracks,
                           const Eigen::VectorXd& s, const Eigen::VectorXd& beta,
                           const prefield::ThetaFull& theta, double h) {
  Blocks b;
  const auto& fp = theta.field;
  const auto& mp = theta.movement;
  const int m = static_cast<int>(s.size());
  Eigen::LLT<Eigen::MatrixXd> llt(q);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  b.field = 0.5 * s.dot(q * s) - 0.5 * logdet + 0.5 * m * kLog2Pi;

  const Eigen::Matrix2d d = mp.sigma * mp.sigma.transpose();
  int off = 0;
  for (const auto& t : tracks) {
    const int n = static_cast<int>(t.size());
    for (int k = 0; k < n; ++k) b.response += normal_nll(t.responses[k], fp.mu + grid.value(s, t.locations[k]), fp.tau2);
    for (int k = 1; k + 1 < n; ++k) {
      const double dt = t.times[k + 1] - t.times[k];
      const Vec2 vel = (t.locations[k] - t.locations[k - 1]) / (t.times[k] - t.times[k - 1]);
      const double level = fp.mu + grid.value(s, t.locations[k]) + mp.c;
      const Vec2 forage = -mp.alpha * level * grid.gradient(s, t.locations[k], h);
      const double f = logistic(beta[off + k]);
      const Vec2 mean = t.locations[k] + (f * forage + (1 - f) * vel) * dt;
      const Eigen::Matrix2d cov = d * dt;
      const Vec2 r = t.locations[k + 1] - mean;
      b.movement += kLog2Pi + 0.5 * std::log(cov.determinant()) + 0.5 * r.dot(cov.inverse() * r);
    }
    const double sb2 = mp.sigma_beta * mp.sigma_beta;
    b.states += normal_nll(beta[off], mp.beta0, sb2 * (t.times[1] - t.times[0]));
    for (int k = 0; k + 1 < n; ++k)
      b.states += normal_nll(beta[off + k + 1], beta[off + k], sb2 * (t.times[k + 1] - t.times[k]));
    off += n;
  }
  return b;
}

/// Central-difference Hessian of a scalar function.
inline Eigen::MatrixXd fd_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                                  const Eigen::VectorXd& x, double h) {
  const int n = static_cast<int>(x.size());
  Eigen::MatrixXd hs(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      auto at = [&](double a, double b) {
        Eigen::VectorXd y = x;
        y[i] += a;
        y[j] += b;
        return f(y);
      };
      hs(i, j) = hs(j, i) = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4 * h * h);
    }
  return hs;
}

inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

struct DenseMode {
  Eigen::VectorXd z;
  Eigen::MatrixXd hessian;
  double value = 0;
};

/// Newton with finite-difference derivatives, eigenvalue-modified Hessian and step halving;
/// for small dimensions only.
inline DenseMode dense_newton(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd z,
                              double h = 1e-4, int iters = 100) {
  for (int it = 0; it < iters; ++it) {
    const Eigen::VectorXd g = fd_gradient(f, z, h);
    const Eigen::MatrixXd hs = fd_hessian(f, z, h);
    // Eigenvalues are reflected and floored so the step is a descent direction away from the mode.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hs);
    const Eigen::VectorXd lam = eig.eigenvalues().cwiseAbs().cwiseMax(1e-6);
    Eigen::VectorXd step = -eig.eigenvectors() * (eig.eigenvectors().transpose() * g).cwiseQuotient(lam);
    const double f0 = f(z);
    double t = 1.0;
    while (t > 1e-10 && !(f(z + t * step) <= f0)) t *= 0.5;
    z += t * step;
    if (step.lpNorm<Eigen::Infinity>() * t < 1e-11 * (1 + z.lpNorm<Eigen::Infinity>())) break;
  }
  return {z, fd_hessian(f, z, h), f(z)};
}

/// -log N(y; mean, cov).
inline double gaussian_nll(const Eigen::VectorXd& y, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::VectorXd r = y - mean;
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return 0.5 * (y.size() * kLog2Pi + logdet + r.dot(llt.solve(r)));
}

/// Matern(kappa = 2) covariance from the closed form of K_2 via the series-free identity
/// K_2(x) = K_0(x) + 2 K_1(x) / x.
inline double matern2(double r, double phi, double sigma2) {
  if (r == 0.0) return sigma2;
  const double x = r / phi;
  const double k2 = std::cyl_bessel_k(0.0, x) + 2.0 * std::cyl_bessel_k(1.0, x) / x;
  return sigma2 * 0.5 * x * x * k2;
}

/// P1 stiffness and lumped mass by direct element loops (dense).
inline void dense_fem(const prefield::Mesh& mesh, Eigen::MatrixXd& g, Eigen::VectorXd& c) {
  const int m = mesh.vertex_count();
  g = Eigen::MatrixXd::Zero(m, m);
  c = Eigen::VectorXd::Zero(m);
  for (const auto& t : mesh.triangles()) {
    Eigen::Matrix3d p;
    for (int k = 0; k < 3; ++k) p.row(k) << 1.0, mesh.vertex(t[k]).x(), mesh.vertex(t[k]).y();
    const double area = 0.5 * std::abs(p.determinant());
    const Eigen::Matrix3d coef = p.inverse();  // column k: coefficients of basis k
    for (int a = 0; a < 3; ++a) {
      c[t[a]] += area / 3.0;
      for (int b = 0; b < 3; ++b)
        g(t[a], t[b]) += area * (coef(1, a) * coef(1, b) + coef(2, a) * coef(2, b));
    }
  }
}

}  // namespace oracle
