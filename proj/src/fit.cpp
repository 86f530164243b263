#include "prefield/fit.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "prefield/errors.hpp"
#include "prefield/matern.hpp"

namespace prefield {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kLog2Pi = 1.8378770664093453;

constexpr std::array<ParamId, 4> kFieldIds = {ParamId::mu, ParamId::tau2, ParamId::phi,
                                              ParamId::sigma2};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Maps between natural parameters and the optimizer's unconstrained coordinates.
struct Coordinates {
  std::vector<ParamId> free;
  bool log_transform = true;

  bool logged(ParamId id) const { return log_transform && param_is_positive(id); }

  Eigen::VectorXd to_u(const ThetaFull& theta) const {
    Eigen::VectorXd u(static_cast<int>(free.size()));
    for (std::size_t i = 0; i < free.size(); ++i) {
      const double v = get_param(theta, free[i]);
      u[static_cast<int>(i)] = logged(free[i]) ? std::log(v) : v;
    }
    return u;
  }

  ThetaFull to_theta(const Eigen::VectorXd& u, ThetaFull base) const {
    for (std::size_t i = 0; i < free.size(); ++i) {
      const double ui = u[static_cast<int>(i)];
      set_param(base, free[i], logged(free[i]) ? std::exp(ui) : ui);
    }
    return base;
  }

  // d(natural)/d(u) for each free coordinate at the given point.
  Eigen::VectorXd jacobian(const ThetaFull& theta) const {
    Eigen::VectorXd j(static_cast<int>(free.size()));
    for (std::size_t i = 0; i < free.size(); ++i)
      j[static_cast<int>(i)] = logged(free[i]) ? get_param(theta, free[i]) : 1.0;
    return j;
  }
};

// Inverse observed information in natural coordinates from a Hessian in u coordinates.
bool covariance_from_hessian(const Eigen::MatrixXd& hess, const Eigen::VectorXd& jac,
                             Eigen::MatrixXd& cov) {
  if (!hess.allFinite()) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(hess);
  if (llt.info() != Eigen::Success) return false;
  const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(hess.rows(), hess.cols()));
  cov = jac.asDiagonal() * inv * jac.asDiagonal();
  return true;
}

std::vector<Estimate> make_estimates(const std::vector<ParamId>& ids, const ThetaFull& theta,
                                     const ParamMask& mask, const std::vector<ParamId>& free,
                                     const Eigen::MatrixXd& cov, bool cov_ok) {
  std::vector<Estimate> out;
  for (ParamId id : ids) {
    Estimate e{id, get_param(theta, id), kNaN, mask.fixed(id)};
    if (!e.fixed && cov_ok) {
      for (std::size_t i = 0; i < free.size(); ++i)
        if (free[i] == id) e.std_error = std::sqrt(cov(static_cast<int>(i), static_cast<int>(i)));
    }
    out.push_back(e);
  }
  return out;
}

// Laplace objective with warm starts from the best mode seen so far.
class LaplaceObjective {
 public:
  LaplaceObjective(std::shared_ptr<const PreferentialModel> model, const FitOptions& options,
                   Coordinates coords, ThetaFull base)
      : engine_(std::move(model), options.laplace), coords_(std::move(coords)), base_(base) {}

  LaplaceResult solve(const ThetaFull& theta) {
    LaplaceResult r = engine_.laplace_nll(theta, have_best_ ? &best_mode_ : nullptr);
    ++count_;
    inner_ += r.inner_iters;
    if (r.converged && (!have_best_ || r.nll < best_nll_)) {
      best_nll_ = r.nll;
      best_mode_ = r.mode;
      have_best_ = true;
    }
    return r;
  }

  double operator()(const Eigen::VectorXd& u) {
    try {
      const LaplaceResult r = solve(coords_.to_theta(u, base_));
      return r.converged ? r.nll : kInf;
    } catch (const Error&) {
      return kInf;
    }
  }

  int count() const { return count_; }
  long inner() const { return inner_; }

 private:
  LaplaceEngine engine_;
  Coordinates coords_;
  ThetaFull base_;
  LatentState best_mode_;
  double best_nll_ = kInf;
  bool have_best_ = false;
  int count_ = 0;
  long inner_ = 0;
};

}  // namespace

ParamMask ParamMask::defaults() {
  ParamMask m;
  m.set_fixed(ParamId::tau2, true);
  m.set_fixed(ParamId::c, true);
  return m;
}

ParamMask ParamMask::all_fixed() {
  ParamMask m;
  m.fixed_.fill(true);
  return m;
}

ParamMask ParamMask::all_free() { return ParamMask{}; }

std::vector<ParamId> ParamMask::free_params() const {
  std::vector<ParamId> out;
  for (int i = 0; i < kParamCount; ++i)
    if (!fixed_[i]) out.push_back(static_cast<ParamId>(i));
  return out;
}

std::vector<Estimate> PreferentialFit::estimates() const {
  std::vector<ParamId> ids;
  for (int i = 0; i < kParamCount; ++i) ids.push_back(static_cast<ParamId>(i));
  return make_estimates(ids, theta, mask, free, covariance, covariance_ok);
}

Eigen::MatrixXd PreferentialFit::correlation() const {
  if (!covariance_ok) return {};
  const Eigen::VectorXd sd = covariance.diagonal().array().sqrt();
  return sd.cwiseInverse().asDiagonal() * covariance * sd.cwiseInverse().asDiagonal();
}

PreferentialFit fit_preferential(std::shared_ptr<const PreferentialModel> model, const ThetaFull& init,
                                 const ParamMask& mask, const FitOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  init.field.validate();
  init.movement.validate();

  PreferentialFit fit;
  fit.mask = mask;
  fit.free = mask.free_params();
  Coordinates coords{fit.free, options.log_transform};
  LaplaceObjective objective(model, options, coords, init);

  const LaplaceResult at_init = objective.solve(init);
  if (!std::isfinite(at_init.nll))
    throw NumericalError("preferential fit: marginal likelihood is not finite at the initial values");

  if (fit.free.empty()) {
    fit.theta = init;
    fit.laplace = at_init;
    fit.converged = at_init.converged;
    fit.message = "all parameters fixed";
  } else {
    const Objective f = [&](const Eigen::VectorXd& u) { return objective(u); };
    const OptimizeResult opt = minimize_bfgs(f, coords.to_u(init), options.outer);
    fit.theta = coords.to_theta(opt.x, init);
    fit.laplace = objective.solve(fit.theta);
    fit.converged = opt.converged && fit.laplace.converged;
    fit.outer_iterations = opt.iterations;
    fit.message = opt.message;

    if (options.compute_covariance) {
      try {
        const Eigen::MatrixXd hess =
            fd_hessian(f, opt.x, fit.laplace.nll, options.hessian_step);
        fit.covariance_ok = covariance_from_hessian(hess, coords.jacobian(fit.theta), fit.covariance);
      } catch (const NumericalError&) {
        fit.covariance_ok = false;
      }
    }
  }
  fit.evaluations = objective.count();
  fit.inner_iterations = objective.inner();
  fit.wall_seconds = seconds_since(start);
  return fit;
}

PreferentialFit fit_preferential(const TrackSet& tracks, MeshPtr mesh, const ThetaFull& init,
                                 const ParamMask& mask, const FitOptions& options) {
  const double h = mesh->cell_width();
  auto model = std::make_shared<const PreferentialModel>(std::move(mesh), tracks, h);
  return fit_preferential(std::move(model), init, mask, options);
}

namespace {

// Pairwise distances and responses of all observations, pooled over tracks.
struct StandardData {
  Eigen::MatrixXd dist;
  Eigen::VectorXd y;

  explicit StandardData(const TrackSet& tracks) {
    validate_tracks(tracks);
    std::vector<Vec2> locs;
    std::vector<double> ys;
    for (const Track& t : tracks)
      for (std::size_t k = 0; k < t.size(); ++k) {
        locs.push_back(t.locations[k]);
        ys.push_back(t.responses[k]);
      }
    const int n = static_cast<int>(locs.size());
    dist.resize(n, n);
    y = Eigen::Map<const Eigen::VectorXd>(ys.data(), n);
    for (int i = 0; i < n; ++i) {
      dist(i, i) = 0.0;
      for (int j = 0; j < i; ++j) dist(i, j) = dist(j, i) = (locs[i] - locs[j]).norm();
    }
  }

  double nll(const FieldParams& p) const {
    p.validate();
    const int n = static_cast<int>(y.size());
    Eigen::MatrixXd cov(n, n);
    for (int j = 0; j < n; ++j) {
      cov(j, j) = p.sigma2 + p.tau2;
      for (int i = j + 1; i < n; ++i) cov(i, j) = p.sigma2 * matern_corr(dist(i, j), p.phi, p.kappa);
    }
    const auto llt =
        dense_cholesky_with_jitter(cov.selfadjointView<Eigen::Lower>(), 1e-8 * p.sigma2, "standard likelihood");
    const Eigen::VectorXd r = y.array() - p.mu;
    const Eigen::VectorXd w = llt.matrixL().solve(r);
    return 0.5 * w.squaredNorm() + 0.5 * dense_log_det(llt) + 0.5 * n * kLog2Pi;
  }
};

}  // namespace

double standard_nll(const TrackSet& tracks, const FieldParams& params) {
  return StandardData(tracks).nll(params);
}

std::vector<Estimate> StandardFit::estimates() const {
  ThetaFull theta;
  theta.field = params;
  std::vector<ParamId> ids(kFieldIds.begin(), kFieldIds.end());
  return make_estimates(ids, theta, mask, free, covariance, covariance_ok);
}

StandardFit fit_standard(const TrackSet& tracks, const FieldParams& init, const ParamMask& mask,
                         const FitOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const StandardData data(tracks);
  StandardFit fit;
  fit.mask = mask;
  for (ParamId id : kFieldIds)
    if (!mask.fixed(id)) fit.free.push_back(id);

  ThetaFull base;
  base.field = init;
  Coordinates coords{fit.free, options.log_transform};
  int count = 0;
  const Objective f = [&](const Eigen::VectorXd& u) {
    ++count;
    try {
      return data.nll(coords.to_theta(u, base).field);
    } catch (const Error&) {
      return kInf;
    }
  };

  fit.nll = data.nll(init);
  ++count;
  if (!std::isfinite(fit.nll))
    throw NumericalError("standard fit: likelihood is not finite at the initial values");
  fit.params = init;
  fit.converged = true;
  if (!fit.free.empty()) {
    const OptimizeResult opt = minimize_bfgs(f, coords.to_u(base), options.outer);
    const ThetaFull theta = coords.to_theta(opt.x, base);
    fit.params = theta.field;
    fit.nll = opt.f;
    fit.converged = opt.converged;
    fit.outer_iterations = opt.iterations;
    fit.message = opt.message;
    if (options.compute_covariance) {
      try {
        const Eigen::MatrixXd hess = fd_hessian(f, opt.x, opt.f, options.hessian_step);
        fit.covariance_ok = covariance_from_hessian(hess, coords.jacobian(theta), fit.covariance);
      } catch (const NumericalError&) {
        fit.covariance_ok = false;
      }
    }
  } else {
    fit.message = "all parameters fixed";
  }
  fit.evaluations = count;
  fit.wall_seconds = seconds_since(start);
  return fit;
}

}  // namespace prefield
