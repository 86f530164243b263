#include "prefield/score.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "prefield/errors.hpp"

namespace prefield {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_shapes(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(what) + ": replicate/location dimensions differ");
}

// Ignorance summand; NaN for excluded entries.
double ignorance(double truth, double pred, double var) {
  if (std::isnan(pred)) return kNaN;
  if (!(var > 0.0)) throw DataError("ignorance score: prediction variance must be positive");
  const double e = truth - pred;
  return e * e / (2.0 * var) + 0.5 * std::log(var);
}

Eigen::MatrixXd ignorance_matrix(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred,
                                 const Eigen::MatrixXd& variance) {
  check_shapes(truth, pred, "ignorance score");
  check_shapes(truth, variance, "ignorance score");
  Eigen::MatrixXd out(truth.rows(), truth.cols());
  for (Eigen::Index j = 0; j < truth.rows(); ++j)
    for (Eigen::Index i = 0; i < truth.cols(); ++i)
      out(j, i) = ignorance(truth(j, i), pred(j, i), variance(j, i));
  return out;
}

double nan_mean(const auto& v) {
  double sum = 0.0;
  int n = 0;
  for (Eigen::Index k = 0; k < v.size(); ++k)
    if (!std::isnan(v[k])) {
      sum += v[k];
      ++n;
    }
  return n > 0 ? sum / n : kNaN;
}

}  // namespace

std::string_view convention_name(RmspeConvention c) {
  return c == RmspeConvention::paper ? "paper" : "rmse";
}

RmspeConvention convention_from_name(std::string_view name) {
  if (name == "paper") return RmspeConvention::paper;
  if (name == "rmse") return RmspeConvention::rmse;
  throw ConfigError("unknown RMSPE convention '" + std::string(name) + "' (expected paper or rmse)");
}

Eigen::VectorXd rmspe(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred,
                      RmspeConvention convention) {
  check_shapes(truth, pred, "rmspe");
  Eigen::VectorXd out(truth.cols());
  for (Eigen::Index i = 0; i < truth.cols(); ++i) {
    Eigen::VectorXd per(truth.rows());
    for (Eigen::Index j = 0; j < truth.rows(); ++j) {
      const double e = truth(j, i) - pred(j, i);
      per[j] = convention == RmspeConvention::paper ? std::sqrt(e * e) : e * e;
    }
    const double m = nan_mean(per);
    out[i] = convention == RmspeConvention::paper ? m : std::sqrt(m);
  }
  return out;
}

Eigen::VectorXd mign(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred,
                     const Eigen::MatrixXd& variance) {
  const Eigen::MatrixXd ig = ignorance_matrix(truth, pred, variance);
  Eigen::VectorXd out(ig.rows());
  for (Eigen::Index j = 0; j < ig.rows(); ++j) out[j] = nan_mean(ig.row(j));
  return out;
}

Eigen::VectorXd lign(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred,
                     const Eigen::MatrixXd& variance) {
  const Eigen::MatrixXd ig = ignorance_matrix(truth, pred, variance);
  Eigen::VectorXd out(ig.cols());
  for (Eigen::Index i = 0; i < ig.cols(); ++i) out[i] = nan_mean(ig.col(i));
  return out;
}

ScoreReport score(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred,
                  const Eigen::MatrixXd& variance, RmspeConvention convention) {
  return {rmspe(truth, pred, convention), mign(truth, pred, variance), lign(truth, pred, variance),
          convention};
}

ScoreDiffs score_diffs(const ScoreReport& pref, const ScoreReport& std_model) {
  if (pref.rmspe.size() != std_model.rmspe.size() || pref.mign.size() != std_model.mign.size() ||
      pref.lign.size() != std_model.lign.size())
    throw std::invalid_argument("score_diffs: report dimensions differ");
  if (pref.convention != std_model.convention)
    throw std::invalid_argument("score_diffs: reports use different RMSPE conventions");
  return {pref.rmspe - std_model.rmspe, pref.mign - std_model.mign, pref.lign - std_model.lign};
}

double quantile(std::vector<double> values, double q) {
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile: q must lie in [0, 1]");
  std::erase_if(values, [](double v) { return std::isnan(v); });
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

Eigen::VectorXd quantile_of_differences(const Eigen::MatrixXd& pref_mean,
                                        const Eigen::MatrixXd& std_mean, double q) {
  check_shapes(pref_mean, std_mean, "quantile_of_differences");
  Eigen::VectorXd out(pref_mean.cols());
  for (Eigen::Index i = 0; i < pref_mean.cols(); ++i) {
    std::vector<double> d(static_cast<std::size_t>(pref_mean.rows()));
    for (Eigen::Index j = 0; j < pref_mean.rows(); ++j)
      d[static_cast<std::size_t>(j)] = pref_mean(j, i) - std_mean(j, i);
    out[i] = quantile(std::move(d), q);
  }
  return out;
}

}  // namespace prefield
