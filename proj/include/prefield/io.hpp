#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefield/fit.hpp"
#include "prefield/gmrf.hpp"
#include "prefield/movement.hpp"
#include "prefield/predict.hpp"
#include "prefield/projection.hpp"
#include "prefield/score.hpp"

namespace prefield {

namespace fs = std::filesystem;

std::string sha256_hex(const std::string& data);
std::string sha256_file(const fs::path& path);

/// Shortest decimal text that reads back to the same double; "nan" for NaN.
std::string format_double(double v);

/// Writes `text` to `path`, creating parent directories. Throws DataError on I/O failure.
void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

// Lattice field: CSV `row,col,x,y,value` plus a JSON sidecar describing the mesh.

struct MeshSidecar {
  Rect domain{};  ///< vertex extent
  int rows = 0;
  int cols = 0;
  double margin = 0.0;  ///< distance between the declared domain and the vertex extent
};

void write_field(const fs::path& csv, const FieldRealization& field, double margin, double level = 0.0);
/// Reads the CSV and `<csv stem>.json`. Values are returned as stored.
FieldRealization read_field(const fs::path& csv, MeshSidecar* sidecar = nullptr);
fs::path sidecar_path(const fs::path& csv);

// Tracks: `track_id,t,x,y,response`.
std::string tracks_to_csv(const TrackSet& tracks);
void write_tracks(const fs::path& path, const TrackSet& tracks);
/// Throws DataError naming the line of any malformed row; tracks must be contiguous.
TrackSet read_tracks(const fs::path& path);
TrackSet parse_tracks(const std::string& text, const std::string& source = "tracks");

/// Raw records: `track_id,timestamp,longitude,latitude,response`. Timestamps are plain numbers
/// or ISO-8601 date-times (read in days since 1970-01-01 UTC); all are multiplied by time_scale.
std::vector<RawRecord> read_raw_records(const fs::path& path, double time_scale = 1.0);
std::vector<RawRecord> parse_raw_records(const std::string& text, double time_scale = 1.0,
                                         const std::string& source = "records");

// Predictions: `x,y,mean,variance,model_tag`.
void write_predictions(const fs::path& path, const PredictionGrid& grid);
PredictionGrid read_predictions(const fs::path& path);

nlohmann::json fit_report(const PreferentialFit& fit, const MeshSidecar& mesh);
nlohmann::json fit_report(const StandardFit& fit);
/// Parameters stored in a report by either fit_report overload.
ThetaFull theta_from_report(const nlohmann::json& report);

nlohmann::json score_json(const ScoreReport& pref, const ScoreReport& std_model, const ScoreDiffs& diffs);
/// Per-location table: x,y and the RMSPE / LIGN columns of both models and their differences,
/// followed by any extra named columns.
void write_location_scores(const fs::path& path, const std::vector<Vec2>& locations,
                           const ScoreReport& pref, const ScoreReport& std_model,
                           const ScoreDiffs& diffs,
                           const std::vector<std::pair<std::string, Eigen::VectorXd>>& extra = {});

/// Collects output files and writes `manifest.json` with their SHA-256 digests. Paths are
/// recorded relative to the output directory, so the manifest is independent of where it lives.
class Manifest {
 public:
  Manifest(fs::path out_dir, std::string command);

  const fs::path& out_dir() const { return out_dir_; }
  /// Absolute path for `relative` under the output directory.
  fs::path path(const std::string& relative) const { return out_dir_ / relative; }
  void add(const std::string& relative);
  void set(const std::string& key, nlohmann::json value) { extra_[key] = std::move(value); }
  /// Writes the JSON document and registers it.
  void write_json(const std::string& relative, const nlohmann::json& j);
  void write_text(const std::string& relative, const std::string& text);
  /// Writes manifest.json; returns its path.
  fs::path finish();

 private:
  fs::path out_dir_;
  std::string command_;
  std::vector<std::string> files_;
  nlohmann::json extra_ = nlohmann::json::object();
};

std::string dump_json(const nlohmann::json& j);

}  // namespace prefield
