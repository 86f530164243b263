#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "prefield/fit.hpp"
#include "prefield/movement.hpp"
#include "prefield/params.hpp"
#include "prefield/projection.hpp"
#include "prefield/score.hpp"

namespace prefield {

/// Prediction targets: a rows x cols lattice over `region` (the protocol domain, or the track
/// extent for data analysis, when unset).
struct LatticeSpec {
  std::optional<Rect> region;
  int rows = 26;
  int cols = 26;
};

struct FitSettings {
  ParamMask mask = ParamMask::defaults();
  /// Fitting-mesh cell width; also the finite-difference step of the field gradient.
  double cell_width = 10.0;
  /// Fitting-mesh padding beyond the data and prediction region, in multiples of phi ...
  double margin_phi = 2.0;
  /// ... plus this many cell widths.
  double margin_cells = 2.0;
  FitOptions options;
  /// Start the field parameters at the generating values (simulation study only).
  bool init_at_truth = true;
  /// Explicit starting values; unset entries are derived from the data.
  std::optional<double> init_mu, init_phi, init_sigma2, init_alpha, init_sigma_beta, init_sigma_x,
      init_sigma_y, init_beta0;
};

struct StudySettings {
  int replicates = 20;
  std::uint64_t seed_base = 1;
  /// Generation grid over the protocol domain (vertex counts, before the one-cell ring).
  int generation_rows = 51;
  int generation_cols = 51;
  int threads = 1;
  double max_failure_fraction = 0.2;
  std::vector<double> quantiles{0.25, 0.75};
  bool write_replicates = true;
};

struct AnalysisSettings {
  std::string tracks;  ///< RawRecord CSV (longitude/latitude) or, with `projected`, track CSV
  bool projected = false;
  std::optional<UtmSpec> projection;
  int per_track = 40;
  int replicates = 50;
  /// Multiplier applied to timestamps after parsing (ISO-8601 stamps are read in days).
  double time_scale = 1.0;
};

struct ExperimentConfig {
  FieldParams field{5.0, 0.1, 2.0, 25.0, 1.5};
  MovementParams movement;
  SimProtocol protocol;
  StudySettings study;
  LatticeSpec prediction;
  FitSettings fit;
  AnalysisSettings analysis;
  RmspeConvention convention = RmspeConvention::paper;
  std::string output_dir = "out";

  ExperimentConfig();
  /// Throws ConfigError on any inconsistent value.
  void validate() const;
};

/// Reads TOML (or JSON when the file name ends in .json). Unknown keys are errors.
/// Throws ConfigError with the offending key or parse position.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text, bool json);

/// Canonical JSON of the resolved configuration (sorted keys). output_dir and study.threads are
/// omitted since they do not affect results.
std::string config_to_json(const ExperimentConfig& config);
/// SHA-256 hex digest of config_to_json.
std::string config_hash(const ExperimentConfig& config);

}  // namespace prefield
