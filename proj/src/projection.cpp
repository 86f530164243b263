#include "prefield/projection.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "prefield/errors.hpp"

namespace prefield {

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;
}

void UtmSpec::validate() const {
  if (zone < 1 || zone > 60) throw ConfigError("UTM zone must be in 1..60");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("projection scale must be positive");
}

double central_meridian(int zone) { return 6.0 * zone - 183.0; }

Vec2 tm_forward(double lon_deg, double lat_deg, int zone, bool southern_false_northing) {
  const double phi = lat_deg * kDeg;
  double dlam = (lon_deg - central_meridian(zone)) * kDeg;
  dlam = std::remainder(dlam, 2.0 * std::numbers::pi);
  const double b = std::cos(phi) * std::sin(dlam);
  if (std::abs(b) >= 1.0) throw DataError("transverse Mercator: point is 90 degrees from the central meridian");
  const double k = kUtmScaleFactor * kAuthalicRadius;
  const double x = k * std::atanh(b);
  const double y = k * std::atan2(std::tan(phi), std::cos(dlam));
  return {kFalseEasting + x, y + (southern_false_northing ? kFalseNorthingSouth : 0.0)};
}

Vec2 tm_inverse(double easting, double northing, int zone, bool southern_false_northing) {
  const double k = kUtmScaleFactor * kAuthalicRadius;
  const double x = (easting - kFalseEasting) / k;
  const double d = (northing - (southern_false_northing ? kFalseNorthingSouth : 0.0)) / k;
  const double phi = std::asin(std::sin(d) / std::cosh(x));
  const double dlam = std::atan2(std::sinh(x), std::cos(d));
  return {central_meridian(zone) + dlam / kDeg, phi / kDeg};
}

ProjectedTracks project_utm_scaled(const std::vector<RawRecord>& records, const UtmSpec& spec) {
  spec.validate();
  std::ostringstream bad;
  int n_bad = 0;
  for (const RawRecord& r : records) {
    if (!(r.latitude >= -80.0 && r.latitude <= 84.0) || !std::isfinite(r.longitude)) {
      if (n_bad < 20) bad << "\n  line " << r.line << ": track " << r.track_id << " lat " << r.latitude
                          << " lon " << r.longitude;
      ++n_bad;
    }
  }
  if (n_bad > 0) {
    std::ostringstream os;
    os << n_bad << " record(s) outside the UTM latitude range [-80, 84]:" << bad.str();
    if (n_bad > 20) os << "\n  ...";
    throw DataError(os.str());
  }

  // Contiguous runs of one track id; a track id reappearing later is an error.
  std::vector<std::vector<RawRecord>> groups;
  std::set<int> seen;
  for (const RawRecord& r : records) {
    if (groups.empty() || groups.back().front().track_id != r.track_id) {
      if (!seen.insert(r.track_id).second) {
        std::ostringstream os;
        os << "line " << r.line << ": records of track " << r.track_id << " are not contiguous";
        throw DataError(os.str());
      }
      groups.emplace_back();
    }
    groups.back().push_back(r);
  }

  ProjectedTracks out;
  for (auto& g : groups) {
    std::stable_sort(g.begin(), g.end(),
                     [](const RawRecord& a, const RawRecord& b) { return a.timestamp < b.timestamp; });
    Track t;
    t.id = g.front().track_id;
    for (const RawRecord& r : g) {
      if (!t.times.empty() && r.timestamp == t.times.back()) {
        std::ostringstream os;
        os << "line " << r.line << ": track " << r.track_id << " repeats timestamp " << r.timestamp
           << "; record dropped";
        out.warnings.push_back(os.str());
        continue;
      }
      const Vec2 p = tm_forward(r.longitude, r.latitude, spec.zone, spec.southern_false_northing);
      t.times.push_back(r.timestamp);
      t.locations.push_back(p * spec.scale);
      t.responses.push_back(r.response);
    }
    out.tracks.push_back(std::move(t));
  }
  return out;
}

}  // namespace prefield
