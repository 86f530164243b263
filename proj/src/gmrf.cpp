#include "prefield/gmrf.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include "prefield/errors.hpp"
#include "prefield/matern.hpp"

namespace prefield {

SpMat spde_operator(const FemMatrices& fem, double phi) {
  const double p2 = 1.0 / (phi * phi);
  const double p4 = p2 * p2;
  const double p6 = p4 * p2;
  SpMat q = fem.M3;
  q += (3.0 * p2) * fem.M2;
  q += (3.0 * p4) * fem.G;
  q += p6 * fem.M0();
  q.makeCompressed();
  return q;
}

PrecisionBundle build_precision(const FemMatrices& fem, const FieldParams& params) {
  params.validate();
  if (params.kappa != 2.0)
    throw ConfigError("the sparse precision construction is only available for kappa = 2");

  PrecisionBundle bundle;
  bundle.phi = params.phi;
  bundle.sigma2 = params.sigma2;
  bundle.scale_const = std::pow(params.phi, 4) / (8.0 * std::numbers::pi * params.sigma2);
  bundle.Q = bundle.scale_const * spde_operator(fem, params.phi);

  auto factor = std::make_shared<SparseCholesky>();
  if (!factor->compute(bundle.Q)) {
    std::ostringstream os;
    os << "precision matrix is not positive definite (phi = " << params.phi
       << ", sigma2 = " << params.sigma2 << ")";
    throw NumericalError(os.str());
  }
  bundle.log_det = factor->log_det();
  bundle.factor = std::move(factor);
  return bundle;
}

PrecisionBundle PrecisionBuilder::build(const FieldParams& params) {
  params.validate();
  if (params.kappa != 2.0)
    throw ConfigError("the sparse precision construction is only available for kappa = 2");
  if (params.phi != phi_ || unit_.size() == 0) {
    unit_ = spde_operator(*fem_, params.phi);
    if (!factor_.factorize(unit_)) {
      phi_ = 0.0;
      std::ostringstream os;
      os << "precision matrix is not positive definite (phi = " << params.phi << ")";
      throw NumericalError(os.str());
    }
    unit_log_det_ = factor_.log_det();
    phi_ = params.phi;
  }
  PrecisionBundle bundle;
  bundle.phi = params.phi;
  bundle.sigma2 = params.sigma2;
  bundle.scale_const = std::pow(params.phi, 4) / (8.0 * std::numbers::pi * params.sigma2);
  bundle.Q = bundle.scale_const * unit_;
  bundle.log_det = unit_log_det_ + static_cast<double>(unit_.rows()) * std::log(bundle.scale_const);
  return bundle;
}

FieldRealization sample_field(const PrecisionBundle& bundle, MeshPtr mesh, std::uint64_t seed) {
  if (!bundle.factor) throw NumericalError("precision bundle has no factorization");
  if (mesh->vertex_count() != bundle.Q.rows())
    throw DataError("mesh and precision matrix dimensions differ");
  Rng rng = make_rng(seed);
  const Eigen::VectorXd z = standard_normals(rng, static_cast<int>(bundle.Q.rows()));
  return {std::move(mesh), bundle.factor->sample_from_normals(z)};
}

Eigen::MatrixXd matern_matrix(const std::vector<Vec2>& locations, const FieldParams& params) {
  const auto n = static_cast<Eigen::Index>(locations.size());
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    cov(i, i) = params.sigma2;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double c = matern_cov((locations[static_cast<std::size_t>(i)] -
                                   locations[static_cast<std::size_t>(j)]).norm(),
                                  params);
      cov(i, j) = c;
      cov(j, i) = c;
    }
  }
  return cov;
}

DenseGaussianSampler::DenseGaussianSampler(const std::vector<Vec2>& locations,
                                           const FieldParams& params) {
  params.validate();
  // Coincident locations share one draw; the covariance would otherwise be singular.
  std::map<std::pair<double, double>, int> seen;
  std::vector<Vec2> unique;
  slot_.reserve(locations.size());
  for (const auto& x : locations) {
    auto [it, inserted] = seen.try_emplace({x.x(), x.y()}, static_cast<int>(unique.size()));
    if (inserted) unique.push_back(x);
    slot_.push_back(it->second);
  }
  const Eigen::MatrixXd cov = matern_matrix(unique, params);
  auto llt = dense_cholesky_with_jitter(cov, 1e-8 * params.sigma2, "dense_gp_draw");
  lower_ = llt.matrixL();
}

Eigen::VectorXd DenseGaussianSampler::draw(Rng& rng) const {
  const Eigen::VectorXd z = standard_normals(rng, static_cast<int>(lower_.rows()));
  const Eigen::VectorXd u = lower_.triangularView<Eigen::Lower>() * z;
  Eigen::VectorXd out(size());
  for (int i = 0; i < size(); ++i) out[i] = u[slot_[static_cast<std::size_t>(i)]];
  return out;
}

Eigen::VectorXd dense_gp_draw(const std::vector<Vec2>& locations, const FieldParams& params,
                              std::uint64_t seed) {
  DenseGaussianSampler sampler(locations, params);
  Rng rng = make_rng(seed);
  return sampler.draw(rng);
}

double interpolate_field(const FieldRealization& field, const Vec2& x) {
  const Barycentric hit = field.mesh->locate(x);
  double value = 0.0;
  for (int k = 0; k < 3; ++k) value += hit.weight[k] * field.values[hit.vertex[k]];
  return value;
}

}  // namespace prefield
