#include <cmath>
#include <limits>
#include <numbers>

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "prefield/errors.hpp"
#include "prefield/fem.hpp"
#include "prefield/gmrf.hpp"
#include "prefield/matern.hpp"
#include "prefield/mesh.hpp"

using namespace prefield;

namespace {

FieldParams matern_params(double phi = 25.0, double sigma2 = 1.5) { return {0.0, 0.0, 2.0, phi, sigma2}; }

Eigen::MatrixXd dense(const SpMat& a) { return Eigen::MatrixXd(a); }

}  // namespace

TEST(Matern, ZeroLagIsVariance) { EXPECT_DOUBLE_EQ(matern_cov(0.0, matern_params()), 1.5); }

TEST(Matern, DecaysMonotonically) {
  double prev = matern_cov(0.0, matern_params());
  for (double r = 1.0; r < 1000.0; r *= 1.5) {
    const double c = matern_cov(r, matern_params());
    EXPECT_LT(c, prev);
    prev = c;
  }
  EXPECT_LT(matern_cov(2000.0, matern_params()), 1e-20);
}

TEST(Matern, HighPrecisionFixture) {
  // 1.5 * 2^-1 / Gamma(2) * K_2(1), evaluated to 30 digits.
  EXPECT_NEAR(matern_cov(25.0, matern_params()), 1.21862917397638311, 1e-14);
}

TEST(Matern, AgreesWithBesselIdentity) {
  for (double r : {0.5, 3.0, 10.0, 40.0, 90.0})
    EXPECT_NEAR(matern_cov(r, matern_params()), oracle::matern2(r, 25.0, 1.5), 1e-12);
}

TEST(Matern, HalfSmoothnessIsExponential) {
  FieldParams p{0.0, 0.0, 0.5, 10.0, 2.0};
  for (double r : {1.0, 7.0, 30.0}) EXPECT_NEAR(matern_cov(r, p), 2.0 * std::exp(-r / 10.0), 1e-12);
}

TEST(Matern, RejectsNegativeLag) { EXPECT_THROW(matern_cov(-1.0, matern_params()), std::domain_error); }

TEST(Mesh, LatticeCounts) {
  const Mesh big = Mesh::lattice({-150, 150, -150, 150}, 51, 51);
  EXPECT_EQ(big.vertex_count(), 2601);
  EXPECT_EQ(big.triangle_count(), 5000);
  const Mesh unit = Mesh::lattice({0, 1, 0, 1}, 2, 2);
  EXPECT_EQ(unit.vertex_count(), 4);
  EXPECT_EQ(unit.triangle_count(), 2);
  EXPECT_EQ(Mesh::lattice({-100, 100, -100, 100}, 26, 26).vertex_count(), 676);
}

TEST(Mesh, RejectsDegenerateLattice) {
  EXPECT_THROW(Mesh::lattice({0, 1, 0, 1}, 1, 4), ConfigError);
  EXPECT_THROW(Mesh::lattice({0, 0, 0, 1}, 3, 3), ConfigError);
}

TEST(Mesh, CoveringContainsRegion) {
  const Rect r{-13.0, 41.0, 2.0, 9.5};
  const Mesh m = Mesh::covering(r, 4.0);
  EXPECT_LE(m.dx(), 4.0 + 1e-12);
  EXPECT_TRUE(m.domain().contains({r.xmin, r.ymin}));
  EXPECT_TRUE(m.domain().contains({r.xmax, r.ymax}));
}

TEST(Mesh, LocateOutsideThrows) {
  const Mesh m = Mesh::lattice({0, 1, 0, 1}, 3, 3);
  EXPECT_FALSE(m.contains({1.5, 0.5}));
  EXPECT_THROW(m.locate({-0.1, 0.5}), OutOfHullError);
}

TEST(Mesh, GeneralMeshLocates) {
  const Mesh m({{0, 0}, {2, 0}, {0, 2}}, {Triangle{0, 1, 2}});
  const auto b = m.locate({0.5, 0.5});
  double sum = 0.0;
  for (double w : b.weight) sum += w;
  EXPECT_NEAR(sum, 1.0, 1e-14);
  EXPECT_FALSE(m.contains({1.5, 1.5}));
}

TEST(Interpolation, VertexCentroidAndLinear) {
  auto mesh = std::make_shared<const Mesh>(Mesh::lattice({0, 3, 0, 2}, 4, 5));
  FieldRealization f{mesh, Eigen::VectorXd(mesh->vertex_count())};
  Rng rng = make_rng(4);
  f.values = standard_normals(rng, mesh->vertex_count());
  for (int i = 0; i < mesh->vertex_count(); ++i)
    EXPECT_NEAR(interpolate_field(f, mesh->vertex(i)), f.values[i], 1e-13);
  for (const auto& t : mesh->triangles()) {
    const Vec2 c = (mesh->vertex(t[0]) + mesh->vertex(t[1]) + mesh->vertex(t[2])) / 3.0;
    EXPECT_NEAR(interpolate_field(f, c), (f.values[t[0]] + f.values[t[1]] + f.values[t[2]]) / 3.0, 1e-13);
  }
  for (int i = 0; i < mesh->vertex_count(); ++i) f.values[i] = mesh->vertex(i).x();
  std::uniform_real_distribution<double> ux(0.0, 3.0), uy(0.0, 2.0);
  for (int k = 0; k < 50; ++k) {
    const Vec2 p(ux(rng), uy(rng));
    EXPECT_NEAR(interpolate_field(f, p), p.x(), 1e-12);
  }
}

TEST(Interpolation, MatchesIndependentWeights) {
  auto mesh = std::make_shared<const Mesh>(Mesh::lattice({-2, 5, 1, 4}, 6, 8));
  oracle::Grid grid(*mesh);
  Rng rng = make_rng(11);
  const Eigen::VectorXd s = standard_normals(rng, mesh->vertex_count());
  std::uniform_real_distribution<double> ux(-2.0, 5.0), uy(1.0, 4.0);
  for (int k = 0; k < 200; ++k) {
    const Vec2 p(ux(rng), uy(rng));
    EXPECT_NEAR(interpolation_form(*mesh, p).apply(s), grid.value(s, p), 1e-12);
  }
}

TEST(Fem, LumpedMassSumsToArea) {
  const Mesh m = Mesh::lattice({-3, 7, 2, 5}, 6, 9);
  const FemMatrices fem = assemble_fem(m);
  EXPECT_NEAR(fem.c_lumped.sum(), 30.0, 1e-12);
  EXPECT_NEAR(dense(consistent_mass(m)).sum(), 30.0, 1e-12);
  const Eigen::VectorXd row_sums = dense(consistent_mass(m)).rowwise().sum();
  EXPECT_LT((row_sums - fem.c_lumped).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Fem, StiffnessAnnihilatesConstants) {
  const Mesh m = Mesh::lattice({0, 4, 0, 3}, 5, 7);
  const FemMatrices fem = assemble_fem(m);
  EXPECT_LT((fem.G * Eigen::VectorXd::Ones(fem.size())).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Fem, StiffnessMatchesHandAssembly) {
  // 3x3 lattice on the unit square, h = 1/2, eight right triangles.
  const Mesh m = Mesh::lattice({0, 1, 0, 1}, 3, 3);
  const Eigen::MatrixXd g = dense(assemble_fem(m).G);
  Eigen::MatrixXd g_ref;
  Eigen::VectorXd c_ref;
  oracle::dense_fem(m, g_ref, c_ref);
  EXPECT_LT((g - g_ref).cwiseAbs().maxCoeff(), 1e-13);
  // Right isosceles elements: 1 at a right-angle corner, 1/2 at each 45 degree corner.
  EXPECT_NEAR(g(4, 4), 4.0, 1e-13);   // centre: 4 from the Laplacian 5-point stencil
  EXPECT_NEAR(g(4, 1), -1.0, 1e-13);  // axis neighbour
  EXPECT_NEAR(g(4, 0), 0.0, 1e-13);   // diagonal neighbour along the split
  EXPECT_NEAR(g(0, 0), 1.0, 1e-13);   // corner touching both triangles of its cell
  EXPECT_NEAR(g(2, 2), 1.0, 1e-13);   // corner touching one triangle
  EXPECT_NEAR(g(1, 1), 2.0, 1e-13);   // edge midpoint
}

TEST(Fem, RejectsDegenerateTriangle) {
  const Mesh m({{0, 0}, {1, 0}, {2, 0}, {0, 1}}, {Triangle{0, 1, 3}, Triangle{0, 1, 2}});
  EXPECT_THROW(assemble_fem(m), DataError);
}

TEST(Precision, FourTermExpansionEqualsRecursion) {
  for (int n : {5, 9, 15}) {
    const Mesh m = Mesh::lattice({-70, 70, -70, 70}, n, n);
    const FemMatrices fem = assemble_fem(m);
    Eigen::MatrixXd g;
    Eigen::VectorXd c;
    oracle::dense_fem(m, g, c);
    for (double phi : {5.0, 25.0, 60.0}) {
      const Eigen::MatrixXd k = c.asDiagonal().toDenseMatrix() / (phi * phi) + g;
      const Eigen::MatrixXd cinv = c.cwiseInverse().asDiagonal();
      const Eigen::MatrixXd rec = k * cinv * k * cinv * k;
      const Eigen::MatrixXd four = dense(spde_operator(fem, phi));
      EXPECT_LT((four - rec).norm() / rec.norm(), 1e-10) << n << " " << phi;
    }
  }
}

TEST(Precision, SymmetricAndLogDet) {
  const Mesh m = Mesh::lattice({0, 100, 0, 100}, 8, 8);
  const FemMatrices fem = assemble_fem(m);
  const PrecisionBundle b = build_precision(fem, matern_params(20.0, 2.0));
  const Eigen::MatrixXd q = dense(b.Q);
  EXPECT_LT((q - q.transpose()).cwiseAbs().maxCoeff(), 1e-12 * q.cwiseAbs().maxCoeff());
  const double ld = 2.0 * Eigen::MatrixXd(q.llt().matrixL()).diagonal().array().log().sum();
  EXPECT_NEAR(b.log_det, ld, 1e-8 * std::abs(ld));

  PrecisionBuilder builder(fem);
  const PrecisionBundle c = builder.build(matern_params(20.0, 2.0));
  EXPECT_NEAR(c.log_det, b.log_det, 1e-9 * std::abs(ld));
  const PrecisionBundle d = builder.build(matern_params(20.0, 0.5));
  EXPECT_NEAR(d.log_det, build_precision(fem, matern_params(20.0, 0.5)).log_det, 1e-9 * std::abs(ld));
}

TEST(Precision, RequiresKappaTwo) {
  const FemMatrices fem = assemble_fem(Mesh::lattice({0, 1, 0, 1}, 3, 3));
  FieldParams p = matern_params();
  p.kappa = 1.0;
  EXPECT_THROW(build_precision(fem, p), ConfigError);
  p.kappa = 2.0;
  p.phi = -1.0;
  EXPECT_THROW(build_precision(fem, p), ConfigError);
}

TEST(Precision, MaternAgreementOnExtendedLattice) {
  const double phi = 25.0, sigma2 = 1.5;
  const Mesh m = fixture::matern_check_mesh(phi);
  const Eigen::MatrixXd cov = dense(build_precision(assemble_fem(m), matern_params(phi, sigma2)).Q).inverse();
  double worst_var = 0.0, worst_corr = 0.0;
  int pairs = 0;
  for (int i = 0; i < m.vertex_count(); ++i) {
    if (!fixture::matern_check_interior(m.vertex(i), phi)) continue;
    worst_var = std::max(worst_var, std::abs(cov(i, i) - sigma2) / sigma2);
    for (int j = 0; j < m.vertex_count(); ++j) {
      if (!fixture::matern_check_interior(m.vertex(j), phi)) continue;
      const double r = (m.vertex(i) - m.vertex(j)).norm();
      if (r > 2.0 * phi) continue;
      const double corr = cov(i, j) / std::sqrt(cov(i, i) * cov(j, j));
      worst_corr = std::max(worst_corr, std::abs(corr - oracle::matern2(r, phi, 1.0)));
      ++pairs;
    }
  }
  EXPECT_GT(pairs, 100);
  EXPECT_LT(worst_var, 0.10);
  EXPECT_LT(worst_corr, 0.05);
}

TEST(Sampling, DeterministicInSeed) {
  auto mesh = std::make_shared<const Mesh>(Mesh::lattice({0, 50, 0, 50}, 6, 6));
  const PrecisionBundle b = build_precision(assemble_fem(*mesh), matern_params(10.0, 1.0));
  EXPECT_EQ(sample_field(b, mesh, 17).values, sample_field(b, mesh, 17).values);
  EXPECT_NE(sample_field(b, mesh, 17).values, sample_field(b, mesh, 18).values);
}

TEST(Sampling, MomentsMatchInversePrecision) {
  auto mesh = std::make_shared<const Mesh>(Mesh::lattice({0, 40, 0, 40}, 5, 5));
  const PrecisionBundle b = build_precision(assemble_fem(*mesh), matern_params(10.0, 1.0));
  const Eigen::MatrixXd cov = dense(b.Q).inverse();
  const int m = mesh->vertex_count();
  const int draws = 10000;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(m);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(m, m);
  for (int d = 0; d < draws; ++d) {
    const Eigen::VectorXd s = sample_field(b, mesh, 1000 + d).values;
    mean += s;
    second += s * s.transpose();
  }
  mean /= draws;
  second /= draws;
  for (int i = 0; i < m; ++i) {
    EXPECT_LT(std::abs(mean[i]), 4.0 * std::sqrt(cov(i, i) / draws));
    for (int j = 0; j < m; ++j) {
      // Var of s_i s_j under a Gaussian: c_ii c_jj + c_ij^2.
      const double se = std::sqrt((cov(i, i) * cov(j, j) + cov(i, j) * cov(i, j)) / draws);
      EXPECT_LT(std::abs(second(i, j) - cov(i, j)), 4.0 * se) << i << "," << j;
    }
  }
}

TEST(DenseSampler, SingleAndCoincidentLocations) {
  const FieldParams p = matern_params(10.0, 2.0);
  const Eigen::VectorXd one = dense_gp_draw({Vec2(1, 2)}, p, 5);
  EXPECT_EQ(one.size(), 1);
  Rng rng = make_rng(5);
  double sum2 = 0.0;
  DenseGaussianSampler single({Vec2(1, 2)}, p);
  for (int k = 0; k < 4000; ++k) sum2 += std::pow(single.draw(rng)[0], 2);
  EXPECT_NEAR(sum2 / 4000, 2.0, 4.0 * 2.0 * std::sqrt(2.0 / 4000));
  const Eigen::VectorXd pair = dense_gp_draw({Vec2(3, 3), Vec2(3, 3)}, p, 9);
  EXPECT_EQ(pair[0], pair[1]);
}

TEST(DenseSampler, VariogramMatchesMatern) {
  const FieldParams p = matern_params(25.0, 1.5);
  // 51 x 51 grid at spacing 5, so the lags 10, 25 and 50 fall on whole cell counts.
  const Mesh grid = Mesh::lattice({-125, 125, -125, 125}, 51, 51);
  DenseGaussianSampler sampler(grid.vertices(), p);
  Rng rng = make_rng(21);
  std::vector<Eigen::VectorXd> draws;
  for (int d = 0; d < 50; ++d) draws.push_back(sampler.draw(rng));
  for (int cells : {2, 5, 10}) {
    double gamma = 0.0;
    int count = 0;
    for (const auto& s : draws)
      for (int r = 0; r < 51; ++r)
        for (int c = 0; c + cells < 51; ++c) {
          gamma += 0.5 * std::pow(s[r * 51 + c + cells] - s[r * 51 + c], 2);
          gamma += 0.5 * std::pow(s[(c + cells) * 51 + r] - s[c * 51 + r], 2);
          count += 2;
        }
    gamma /= count;
    const double lag = 5.0 * cells;
    // Pairs within one draw are strongly dependent, so the band is set by the 50 draws alone.
    EXPECT_NEAR(gamma, 1.5 - matern_cov(lag, p), 0.15 * 1.5) << lag;
  }
}
