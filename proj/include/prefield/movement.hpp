#pragma once

#include <cstdint>
#include <vector>

#include "prefield/geometry.hpp"
#include "prefield/gmrf.hpp"
#include "prefield/linalg.hpp"
#include "prefield/params.hpp"

namespace prefield {

/// Time-ordered sampler positions and responses for one trip.
struct Track {
  int id = 0;
  std::vector<double> times;
  std::vector<Vec2> locations;
  std::vector<double> responses;
  std::vector<double> betas;  ///< behavioural states; filled by the simulator only

  std::size_t size() const { return times.size(); }
  /// Equal lengths, strictly increasing finite times, n >= 3. Throws DataError.
  void validate() const;
  Rect bounding_box() const;
};

using TrackSet = std::vector<Track>;

void validate_tracks(const TrackSet& tracks);

/// Track generation protocol: raw steps with exponential gaps, burn-in, thinning.
struct SimProtocol {
  Rect domain{-150.0, 150.0, -150.0, 150.0};
  int n_raw = 360;
  int burn_in = 60;
  int thin = 3;
  double lambda = 10.0;
  int n_tracks = 3;
  std::uint64_t seed = 1;
  /// Finite-difference step for the field gradient; 0 selects the field mesh cell width.
  double grad_step = 0.0;

  void validate() const;
  /// Number of observations kept per track.
  int retained() const;
};

/// Logistic weight exp(beta) / (1 + exp(beta)); beta is clamped to [-40, 40] first.
double behaviour_weight(double beta);

/// Central-difference gradient of the interpolated field with step h.
Vec2 grad_field(const FieldRealization& field, const Vec2& x, double h);

/// Foraging term -alpha * (field_level + S(x) + c) * grad S(x).
///
/// `field_level` is the constant mean the realization is measured against (0 when the
/// realization already carries it), so the preference acts on the level of the response itself.
Vec2 foraging_drift(const Vec2& x, const FieldRealization& field, const MovementParams& params,
                    double h, double field_level = 0.0);

/// (X_k - X_{k-1}) / (t_k - t_{k-1}) with a 0-based index k >= 1. Throws std::out_of_range.
Vec2 velocity_approx(const Track& track, std::size_t k);

/// f(beta_k) * foraging + (1 - f(beta_k)) * velocity at 0-based index k >= 1.
Vec2 drift(const Track& track, std::size_t k, const FieldRealization& field,
           const MovementParams& params, double h, double field_level = 0.0);

struct StepResult {
  Vec2 location;
  double beta = 0.0;
  int reflections = 0;
};

/// Folds x back into [lo, hi] by repeated reflection at the boundaries; counts the folds.
double reflect_into(double x, double lo, double hi, int& reflections);

/// One PCRW transition from the last point of `so_far` (which needs >= 2 points and betas):
/// X' = X + mu * dt + Sigma A sqrt(dt), beta' = beta + sigma_beta B sqrt(dt).
/// Coordinates leaving `domain` are reflected back inside.
StepResult step(const Track& so_far, const FieldRealization& field, const MovementParams& params,
                double dt, double h, const Rect& domain, Rng& rng, double field_level = 0.0);

struct SimulatedTrack {
  Track track;
  int reflections = 0;
};

/// Simulates one track: uniform start, a pure-diffusion second point, PCRW steps with
/// Exponential(lambda) gaps, burn-in removal, thinning, and responses mu + S(X) + N(0, tau2).
SimulatedTrack simulate_track(const FieldRealization& field, const MovementParams& params,
                              const FieldParams& field_params, const SimProtocol& protocol,
                              Rng& rng);

/// protocol.n_tracks independent tracks, track i drawn from stream i of `seed`.
TrackSet simulate_tracks(const FieldRealization& field, const MovementParams& params,
                         const FieldParams& field_params, const SimProtocol& protocol,
                         std::uint64_t seed, int* reflections = nullptr);

}  // namespace prefield
