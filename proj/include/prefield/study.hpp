#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "prefield/config.hpp"
#include "prefield/fit.hpp"
#include "prefield/gmrf.hpp"
#include "prefield/io.hpp"
#include "prefield/predict.hpp"
#include "prefield/score.hpp"

namespace prefield {

/// Uniform sample of `per_track` observations from every track without replacement, kept in
/// time order. Deterministic in `seed`. Throws DataError when per_track < 3 or exceeds a track.
TrackSet subsample_tracks(const TrackSet& tracks, int per_track, std::uint64_t seed);

/// Union of the track bounding boxes.
Rect tracks_extent(const TrackSet& tracks);

/// Lattice with spacing <= cell_width covering `region`, every track and a `margin` pad.
MeshPtr fitting_mesh(const TrackSet& tracks, const Rect& region, double cell_width, double margin);

/// rows x cols lattice over `domain` plus a one-cell ring, so gradient stencils of the
/// simulator stay inside the mesh.
MeshPtr generation_mesh(const Rect& domain, int rows, int cols);

/// Starting values. Field parameters are the configured ones when fit.init_at_truth, otherwise
/// moments of the data (mean and variance of the responses, a tenth of the extent for phi).
/// Movement parameters always start from the data: RMS scaled increments for Sigma, alpha = 0,
/// beta0 = 0 and the configured sigma_beta. Explicit fit.init entries override all of these.
ThetaFull initial_theta(const TrackSet& tracks, const ExperimentConfig& config);

/// Both fits on one data set.
struct ModelFits {
  MeshPtr mesh;
  MeshSidecar mesh_info;
  std::shared_ptr<const PreferentialModel> model;
  StandardFit standard;
  PreferentialFit preferential;
};

/// Builds the fitting mesh around `tracks` and `region`, then fits the standard and the
/// preferential model from `init`.
ModelFits fit_both(const TrackSet& tracks, const Rect& region, const ThetaFull& init,
                   const ExperimentConfig& config);

/// One simulated data set: field (zero mean) on the generation grid and the tracks.
struct SimulatedData {
  FieldRealization field;
  TrackSet tracks;
  int reflections = 0;
};

/// Generation machinery shared by all replicates of a study.
class Simulator {
 public:
  explicit Simulator(const ExperimentConfig& config);
  SimulatedData draw(std::uint64_t seed) const;
  const MeshPtr& mesh() const { return mesh_; }
  /// Pad between the protocol domain and the generation-grid extent.
  double margin() const;

 private:
  ExperimentConfig config_;
  MeshPtr mesh_;
  std::unique_ptr<DenseGaussianSampler> sampler_;
};

/// Prediction targets for the study (the configured region, or the protocol domain).
std::vector<Vec2> study_targets(const ExperimentConfig& config);

struct ReplicateOutcome {
  int index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  int reflections = 0;
  int observations = 0;
  StandardFit standard;
  PreferentialFit preferential;
  PredictionGrid standard_prediction;
  PredictionGrid preferential_prediction;
  Eigen::VectorXd truth;  ///< mu + S at the targets
};

struct StudyReport {
  std::vector<Vec2> targets;
  std::vector<ReplicateOutcome> replicates;
  int failures = 0;
  bool failed = false;  ///< failure fraction above the configured threshold
  ScoreReport preferential;
  ScoreReport standard;
  ScoreDiffs diffs;
  std::vector<int> scored;  ///< indices of the replicates entering the scores
  std::filesystem::path manifest;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Full simulation study: every replicate draws a field and tracks, fits both models, predicts
/// both on the target lattice and is scored. Writes all artifacts under `out_dir` and returns
/// the report. Replicate failures are recorded; `failed` is set when they exceed the threshold.
StudyReport run_simulation_study(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                 int threads = 1, const ProgressFn& progress = {});

struct AnalysisReplicate {
  int index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  StandardFit standard;
  PreferentialFit preferential;
  PredictionGrid standard_prediction;
  PredictionGrid preferential_prediction;
};

struct AnalysisReport {
  TrackSet tracks;  ///< projected input
  std::vector<std::string> warnings;
  std::vector<Vec2> targets;
  std::vector<AnalysisReplicate> replicates;
  std::vector<std::pair<double, Eigen::VectorXd>> quantiles;  ///< (q, per-location quantile)
  int failures = 0;
  bool failed = false;
  std::filesystem::path manifest;
};

/// Loads tracks named in config.analysis (projecting raw records when needed).
TrackSet load_analysis_tracks(const ExperimentConfig& config, std::vector<std::string>* warnings = nullptr);

/// Data analysis: per replicate subsample, fit both models, predict on the lattice; emits the
/// estimate table and per-location quantiles of the prediction differences.
AnalysisReport run_data_analysis(const TrackSet& tracks, const ExperimentConfig& config,
                                 const std::filesystem::path& out_dir, int threads = 1,
                                 const ProgressFn& progress = {});

}  // namespace prefield
