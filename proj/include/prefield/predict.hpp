#pragma once

#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "prefield/fit.hpp"
#include "prefield/geometry.hpp"
#include "prefield/likelihood.hpp"

namespace prefield {

enum class ModelTag { preferential, standard };

std::string_view model_tag_name(ModelTag tag);

/// Field predictions at a set of targets. Targets outside the prediction model's support are
/// flagged invalid and carry NaN mean and variance.
struct PredictionGrid {
  std::vector<Vec2> locations;
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  std::vector<bool> valid;
  ModelTag tag = ModelTag::standard;

  int size() const { return static_cast<int>(locations.size()); }
};

/// rows x cols lattice over `region`, row-major with x varying fastest (same order as Mesh).
std::vector<Vec2> lattice_points(const Rect& region, int rows, int cols);

/// Mode predictor: mean = mu + a^T s_hat, variance = a^T H^-1 a, where a holds the
/// interpolation weights and H the joint Hessian at the mode.
PredictionGrid predict_preferential(const PreferentialModel& model, const ThetaFull& theta,
                                    const LatentState& mode, const std::vector<Vec2>& targets);
PredictionGrid predict_preferential(const PreferentialModel& model, const PreferentialFit& fit,
                                    const std::vector<Vec2>& targets);

/// Simple kriging of S from all responses with Matern(kappa = 2) covariance.
PredictionGrid krige(const FieldParams& params, const TrackSet& tracks,
                     const std::vector<Vec2>& targets);

}  // namespace prefield
