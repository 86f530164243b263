#include "prefield/movement.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <Eigen/LU>

#include "prefield/errors.hpp"

namespace prefield {

void MovementParams::validate() const {
  if (!std::isfinite(alpha) || !std::isfinite(c) || !std::isfinite(sigma_beta) ||
      !std::isfinite(beta0) || !sigma.allFinite())
    throw ConfigError("movement parameters must be finite");
  if (sigma_beta <= 0.0) throw ConfigError("movement parameter sigma_beta must be positive");
  const Eigen::Matrix2d cov = sigma * sigma.transpose();
  if (!(cov.determinant() > 0.0)) throw ConfigError("movement matrix Sigma must be non-singular");
}

void Track::validate() const {
  std::ostringstream os;
  if (locations.size() != times.size() || responses.size() != times.size()) {
    os << "track " << id << ": times, locations and responses differ in length";
    throw DataError(os.str());
  }
  if (!betas.empty() && betas.size() != times.size()) {
    os << "track " << id << ": betas length differs from times";
    throw DataError(os.str());
  }
  if (times.size() < 3) {
    os << "track " << id << " has " << times.size()
       << " observations; at least 3 are needed to form velocities";
    throw DataError(os.str());
  }
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!std::isfinite(times[k]) || !locations[k].allFinite() || !std::isfinite(responses[k])) {
      os << "track " << id << ": non-finite value at observation " << k;
      throw DataError(os.str());
    }
    if (k > 0 && !(times[k] > times[k - 1])) {
      os << "track " << id << ": times not strictly increasing at observation " << k;
      throw DataError(os.str());
    }
  }
}

Rect Track::bounding_box() const {
  if (locations.empty()) return {};
  Rect box{locations[0].x(), locations[0].x(), locations[0].y(), locations[0].y()};
  for (const auto& x : locations) box = box.united({x.x(), x.x(), x.y(), x.y()});
  return box;
}

void validate_tracks(const TrackSet& tracks) {
  if (tracks.empty()) throw DataError("no tracks supplied");
  for (const auto& t : tracks) t.validate();
}

void SimProtocol::validate() const {
  if (!(domain.width() > 0.0) || !(domain.height() > 0.0))
    throw ConfigError("protocol domain has zero width or height");
  if (n_raw < 3) throw ConfigError("protocol n_raw must be at least 3");
  if (burn_in < 0 || burn_in >= n_raw) throw ConfigError("protocol burn_in must be in [0, n_raw)");
  if (thin < 1) throw ConfigError("protocol thin must be >= 1");
  if (!(lambda > 0.0)) throw ConfigError("protocol lambda must be positive");
  if (n_tracks < 1) throw ConfigError("protocol n_tracks must be >= 1");
  if (grad_step < 0.0) throw ConfigError("protocol grad_step must be >= 0");
  if (retained() < 3) throw ConfigError("protocol retains fewer than 3 observations per track");
}

int SimProtocol::retained() const { return (n_raw - burn_in + thin - 1) / thin; }

double behaviour_weight(double beta) {
  const double b = std::clamp(beta, -40.0, 40.0);
  if (b >= 0.0) return 1.0 / (1.0 + std::exp(-b));
  const double e = std::exp(b);
  return e / (1.0 + e);
}

Vec2 grad_field(const FieldRealization& field, const Vec2& x, double h) {
  const auto forms = gradient_forms(*field.mesh, x, h);
  return {forms[0].apply(field.values), forms[1].apply(field.values)};
}

Vec2 foraging_drift(const Vec2& x, const FieldRealization& field, const MovementParams& params,
                    double h, double field_level) {
  if (params.alpha == 0.0) return Vec2::Zero();
  const double level = field_level + interpolate_field(field, x) + params.c;
  return -params.alpha * level * grad_field(field, x, h);
}

Vec2 velocity_approx(const Track& track, std::size_t k) {
  if (k < 1 || k >= track.size()) throw std::out_of_range("velocity_approx needs 1 <= k < n");
  return (track.locations[k] - track.locations[k - 1]) / (track.times[k] - track.times[k - 1]);
}

Vec2 drift(const Track& track, std::size_t k, const FieldRealization& field,
           const MovementParams& params, double h, double field_level) {
  if (k >= track.betas.size()) throw std::out_of_range("drift: no behavioural state at index");
  const double w = behaviour_weight(track.betas[k]);
  const Vec2 velocity = velocity_approx(track, k);
  if (w == 0.0) return velocity;
  return w * foraging_drift(track.locations[k], field, params, h, field_level) +
         (1.0 - w) * velocity;
}

double reflect_into(double x, double lo, double hi, int& reflections) {
  if (x >= lo && x <= hi) return x;
  const double width = hi - lo;
  const double period = 2.0 * width;
  double y = std::fmod(x - lo, period);
  if (y < 0.0) y += period;
  // Number of boundary crossings between x and its folded position.
  reflections += static_cast<int>(std::abs(std::floor((x - lo) / width)));
  return y <= width ? lo + y : lo + (period - y);
}

StepResult step(const Track& so_far, const FieldRealization& field, const MovementParams& params,
                double dt, double h, const Rect& domain, Rng& rng, double field_level) {
  if (!(dt > 0.0)) throw DataError("step: dt must be positive");
  const std::size_t n = so_far.size();
  if (n < 2 || so_far.betas.size() != n) throw DataError("step: needs two prior points with states");
  std::normal_distribution<double> normal(0.0, 1.0);
  const Vec2 a(normal(rng), normal(rng));
  const double b = normal(rng);
  const double sdt = std::sqrt(dt);

  const Vec2 mean = drift(so_far, n - 1, field, params, h, field_level);
  Vec2 next = so_far.locations[n - 1] + mean * dt + params.sigma * a * sdt;
  StepResult result;
  next.x() = reflect_into(next.x(), domain.xmin, domain.xmax, result.reflections);
  next.y() = reflect_into(next.y(), domain.ymin, domain.ymax, result.reflections);
  result.location = next;
  result.beta = so_far.betas[n - 1] + params.sigma_beta * b * sdt;
  return result;
}

SimulatedTrack simulate_track(const FieldRealization& field, const MovementParams& params,
                              const FieldParams& field_params, const SimProtocol& protocol,
                              Rng& rng) {
  protocol.validate();
  if (!field.mesh->contains({protocol.domain.xmin, protocol.domain.ymin}) ||
      !field.mesh->contains({protocol.domain.xmax, protocol.domain.ymax}))
    throw ConfigError("protocol domain is not covered by the field mesh");
  const double h = protocol.grad_step > 0.0 ? protocol.grad_step : field.mesh->cell_width();

  std::uniform_real_distribution<double> ux(protocol.domain.xmin, protocol.domain.xmax);
  std::uniform_real_distribution<double> uy(protocol.domain.ymin, protocol.domain.ymax);
  std::exponential_distribution<double> gap(protocol.lambda);
  std::normal_distribution<double> normal(0.0, 1.0);

  Track raw;
  raw.times.reserve(static_cast<std::size_t>(protocol.n_raw));
  raw.locations.reserve(static_cast<std::size_t>(protocol.n_raw));
  raw.betas.reserve(static_cast<std::size_t>(protocol.n_raw));

  SimulatedTrack out;
  const double x0 = ux(rng);
  const double y0 = uy(rng);
  raw.times.push_back(0.0);
  raw.locations.emplace_back(x0, y0);
  raw.betas.push_back(params.beta0);

  {
    // Velocity is undefined before two points: the second one is a pure diffusion step.
    const double dt = gap(rng);
    const double sdt = std::sqrt(dt);
    const Vec2 a(normal(rng), normal(rng));
    const double b = normal(rng);
    Vec2 next = raw.locations[0] + params.sigma * a * sdt;
    next.x() = reflect_into(next.x(), protocol.domain.xmin, protocol.domain.xmax, out.reflections);
    next.y() = reflect_into(next.y(), protocol.domain.ymin, protocol.domain.ymax, out.reflections);
    raw.times.push_back(dt);
    raw.locations.push_back(next);
    raw.betas.push_back(params.beta0 + params.sigma_beta * b * sdt);
  }

  while (static_cast<int>(raw.times.size()) < protocol.n_raw) {
    const double dt = gap(rng);
    const StepResult s = step(raw, field, params, dt, h, protocol.domain, rng, field_params.mu);
    out.reflections += s.reflections;
    raw.times.push_back(raw.times.back() + dt);
    raw.locations.push_back(s.location);
    raw.betas.push_back(s.beta);
  }

  Track& track = out.track;
  for (int k = protocol.burn_in; k < protocol.n_raw; k += protocol.thin) {
    const auto i = static_cast<std::size_t>(k);
    track.times.push_back(raw.times[i]);
    track.locations.push_back(raw.locations[i]);
    track.betas.push_back(raw.betas[i]);
  }
  const double sd = std::sqrt(field_params.tau2);
  track.responses.reserve(track.times.size());
  for (const auto& x : track.locations)
    track.responses.push_back(field_params.mu + interpolate_field(field, x) + sd * normal(rng));
  return out;
}

TrackSet simulate_tracks(const FieldRealization& field, const MovementParams& params,
                         const FieldParams& field_params, const SimProtocol& protocol,
                         std::uint64_t seed, int* reflections) {
  TrackSet tracks;
  int total = 0;
  for (int i = 0; i < protocol.n_tracks; ++i) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(i));
    SimulatedTrack sim = simulate_track(field, params, field_params, protocol, rng);
    sim.track.id = i;
    total += sim.reflections;
    tracks.push_back(std::move(sim.track));
  }
  if (reflections) *reflections = total;
  return tracks;
}

}  // namespace prefield
