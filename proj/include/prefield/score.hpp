#pragma once

#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace prefield {

/// `paper`: per-location mean of |error| (the square root is taken per replicate before
/// averaging). `rmse`: per-location root of the mean squared error.
enum class RmspeConvention { paper, rmse };

std::string_view convention_name(RmspeConvention c);
/// Throws ConfigError for anything other than "paper" or "rmse".
RmspeConvention convention_from_name(std::string_view name);

// All score functions take replicate-by-location matrices (row j = replicate, column i =
// location). NaN predictions mark excluded entries and are skipped; a location or replicate
// with no valid entries scores NaN.

Eigen::VectorXd rmspe(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred,
                      RmspeConvention convention = RmspeConvention::paper);

/// Per replicate: mean over locations of (S - S_hat)^2 / (2 var) + log sd.
Eigen::VectorXd mign(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred,
                     const Eigen::MatrixXd& variance);

/// Per location: the same summand averaged over replicates.
Eigen::VectorXd lign(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred,
                     const Eigen::MatrixXd& variance);

struct ScoreReport {
  Eigen::VectorXd rmspe;  ///< per location
  Eigen::VectorXd mign;   ///< per replicate
  Eigen::VectorXd lign;   ///< per location
  RmspeConvention convention = RmspeConvention::paper;
};

ScoreReport score(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred,
                  const Eigen::MatrixXd& variance, RmspeConvention convention = RmspeConvention::paper);

/// Preferential minus standard; negative entries favour the preferential model.
struct ScoreDiffs {
  Eigen::VectorXd rmspe;
  Eigen::VectorXd mign;
  Eigen::VectorXd lign;
};

/// Throws std::invalid_argument on mismatched sizes or conventions.
ScoreDiffs score_diffs(const ScoreReport& pref, const ScoreReport& std_model);

/// Empirical q-quantile with linear interpolation between order statistics
/// (position q * (n - 1) in the sorted sample). NaNs are dropped.
double quantile(std::vector<double> values, double q);

/// Per location, the q-quantile over replicates of pref_mean - std_mean.
Eigen::VectorXd quantile_of_differences(const Eigen::MatrixXd& pref_mean,
                                        const Eigen::MatrixXd& std_mean, double q);

}  // namespace prefield
