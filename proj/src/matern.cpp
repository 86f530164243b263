#include "prefield/matern.hpp"

#include <cmath>
#include <stdexcept>

#include "prefield/errors.hpp"

namespace prefield {

void FieldParams::validate() const {
  if (!std::isfinite(mu) || !std::isfinite(tau2) || !std::isfinite(kappa) ||
      !std::isfinite(phi) || !std::isfinite(sigma2))
    throw ConfigError("field parameters must be finite");
  if (phi <= 0.0) throw ConfigError("field parameter phi must be positive");
  if (sigma2 <= 0.0) throw ConfigError("field parameter sigma2 must be positive");
  if (tau2 < 0.0) throw ConfigError("field parameter tau2 must be non-negative");
  if (kappa <= 0.0) throw ConfigError("field parameter kappa must be positive");
}

double matern_corr(double r, double phi, double kappa) {
  if (!std::isfinite(r) || r < 0.0) throw std::domain_error("matern_cov: distance must be finite and >= 0");
  if (r == 0.0) return 1.0;
  const double u = r / phi;
  // K_kappa underflows long after the product has become negligible.
  if (u > 700.0) return 0.0;
  const double scale = std::exp((1.0 - kappa) * std::log(2.0) - std::lgamma(kappa));
  const double value = scale * std::pow(u, kappa) * std::cyl_bessel_k(kappa, u);
  // Small-u evaluation can overshoot 1 by rounding.
  return value > 1.0 ? 1.0 : value;
}

double matern_cov(double r, const FieldParams& params) {
  return params.sigma2 * matern_corr(r, params.phi, params.kappa);
}

}  // namespace prefield
