#include "prefield/predict.hpp"

#include <cmath>
#include <limits>

#include "prefield/errors.hpp"
#include "prefield/gmrf.hpp"
#include "prefield/linalg.hpp"
#include "prefield/matern.hpp"

namespace prefield {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

PredictionGrid empty_grid(const std::vector<Vec2>& targets, ModelTag tag) {
  PredictionGrid g;
  g.locations = targets;
  g.mean = Eigen::VectorXd::Constant(static_cast<int>(targets.size()), kNaN);
  g.variance = g.mean;
  g.valid.assign(targets.size(), false);
  g.tag = tag;
  return g;
}
}  // namespace

std::string_view model_tag_name(ModelTag tag) {
  return tag == ModelTag::preferential ? "preferential" : "standard";
}

std::vector<Vec2> lattice_points(const Rect& region, int rows, int cols) {
  if (rows < 1 || cols < 1) throw ConfigError("prediction lattice needs at least one row and column");
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(rows * cols));
  const double dx = cols > 1 ? region.width() / (cols - 1) : 0.0;
  const double dy = rows > 1 ? region.height() / (rows - 1) : 0.0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      pts.emplace_back(c == cols - 1 && cols > 1 ? region.xmax : region.xmin + c * dx,
                       r == rows - 1 && rows > 1 ? region.ymax : region.ymin + r * dy);
  return pts;
}

PredictionGrid predict_preferential(const PreferentialModel& model, const ThetaFull& theta,
                                    const LatentState& mode, const std::vector<Vec2>& targets) {
  PredictionGrid g = empty_grid(targets, ModelTag::preferential);
  const PrecisionBundle bundle = build_precision(model.fem(), theta.field);
  const SpMat h = model.hessian(model.pack(mode), theta, bundle);
  SparseCholesky factor;
  if (!factor.compute(h))
    throw NumericalError("preferential prediction: Hessian at the mode is not positive definite");

  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto bary = model.mesh().try_locate(targets[i]);
    if (!bary) continue;
    std::vector<std::pair<int, double>> w;
    double m = theta.field.mu;
    for (int k = 0; k < 3; ++k) {
      w.emplace_back(bary->vertex[k], bary->weight[k]);
      m += bary->weight[k] * mode.s[bary->vertex[k]];
    }
    g.mean[static_cast<int>(i)] = m;
    g.variance[static_cast<int>(i)] = factor.quadratic_inverse(w);
    g.valid[i] = true;
  }
  return g;
}

PredictionGrid predict_preferential(const PreferentialModel& model, const PreferentialFit& fit,
                                    const std::vector<Vec2>& targets) {
  return predict_preferential(model, fit.theta, fit.laplace.mode, targets);
}

PredictionGrid krige(const FieldParams& params, const TrackSet& tracks,
                     const std::vector<Vec2>& targets) {
  params.validate();
  std::vector<Vec2> locs;
  std::vector<double> ys;
  for (const Track& t : tracks)
    for (std::size_t k = 0; k < t.size(); ++k) {
      locs.push_back(t.locations[k]);
      ys.push_back(t.responses[k]);
    }
  const int n = static_cast<int>(locs.size());
  PredictionGrid g = empty_grid(targets, ModelTag::standard);
  if (n == 0) {
    g.mean.setConstant(params.mu);
    g.variance.setConstant(params.sigma2);
    g.valid.assign(targets.size(), true);
    return g;
  }

  Eigen::MatrixXd cov = matern_matrix(locs, params);
  cov.diagonal().array() += params.tau2;
  const auto llt = dense_cholesky_with_jitter(cov, 1e-8 * params.sigma2, "kriging");
  const Eigen::VectorXd resid = Eigen::Map<const Eigen::VectorXd>(ys.data(), n).array() - params.mu;
  const Eigen::VectorXd weights = llt.solve(resid);

  Eigen::VectorXd cstar(n);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    for (int j = 0; j < n; ++j) cstar[j] = matern_cov((targets[i] - locs[j]).norm(), params);
    const Eigen::VectorXd half = llt.matrixL().solve(cstar);
    g.mean[static_cast<int>(i)] = params.mu + cstar.dot(weights);
    g.variance[static_cast<int>(i)] = std::max(0.0, params.sigma2 - half.squaredNorm());
    g.valid[i] = true;
  }
  return g;
}

}  // namespace prefield
