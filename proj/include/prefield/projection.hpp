#pragma once

#include <string>
#include <vector>

#include "prefield/geometry.hpp"
#include "prefield/movement.hpp"

namespace prefield {

/// Spherical transverse Mercator on the authalic sphere with UTM zone conventions
/// (central meridian 6 * zone - 183 degrees, k0 = 0.9996, false easting 500 km).
struct UtmSpec {
  int zone = 0;
  /// Multiplier applied to projected metres; the result is in model distance units.
  double scale = 0.0;
  /// Adds the 10 000 km false northing used for southern-hemisphere UTM.
  bool southern_false_northing = false;

  /// Throws ConfigError for zones outside 1..60 or a non-positive scale.
  void validate() const;
};

inline constexpr double kAuthalicRadius = 6371007.181;
inline constexpr double kUtmScaleFactor = 0.9996;
inline constexpr double kFalseEasting = 500000.0;
inline constexpr double kFalseNorthingSouth = 10000000.0;

double central_meridian(int zone);

/// Degrees in, metres out (no user scale).
Vec2 tm_forward(double lon_deg, double lat_deg, int zone, bool southern_false_northing = false);
/// Metres in, (lon, lat) degrees out.
Vec2 tm_inverse(double easting, double northing, int zone, bool southern_false_northing = false);

/// One row of an external track file.
struct RawRecord {
  int track_id = 0;
  double timestamp = 0.0;
  double longitude = 0.0;
  double latitude = 0.0;
  double response = 0.0;
  int line = 0;  ///< 1-based source line, 0 when not read from a file
};

struct ProjectedTracks {
  TrackSet tracks;
  std::vector<std::string> warnings;
};

/// Groups records by track (records of one track must be contiguous), sorts each track by time,
/// drops repeated timestamps with a warning, projects and scales the coordinates.
/// Throws DataError listing records with latitude outside [-80, 84] or non-contiguous tracks.
ProjectedTracks project_utm_scaled(const std::vector<RawRecord>& records, const UtmSpec& spec);

}  // namespace prefield
