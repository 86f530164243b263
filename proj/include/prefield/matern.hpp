#pragma once

#include "prefield/params.hpp"

namespace prefield {

/// Matern covariance C(r) = sigma2 * 2^(1-kappa) / Gamma(kappa) * (r/phi)^kappa * K_kappa(r/phi).
///
/// Returns sigma2 at r = 0 (the continuous limit). Any kappa > 0 is accepted here; this is
/// the dense reference path and the generator for simulated fields. Throws std::domain_error
/// on negative or non-finite r.
double matern_cov(double r, const FieldParams& params);

/// Matern correlation for unit variance: matern_cov(r) / sigma2.
double matern_corr(double r, double phi, double kappa);

}  // namespace prefield
