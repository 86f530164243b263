#include "prefield/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/LU>

#include "prefield/errors.hpp"

namespace prefield {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

constexpr std::array<std::string_view, kParamCount> kNames = {
    "mu", "tau2", "phi", "sigma2", "alpha", "c", "sigma_beta", "sigma_x", "sigma_y", "beta0"};

using Triplet = Eigen::Triplet<double>;

// Logistic weight with its first two derivatives.
struct Logistic {
  double p, d1, d2;
};

Logistic logistic(double beta) {
  const double p = behaviour_weight(beta);
  const double d1 = p * (1.0 - p);
  return {p, d1, d1 * (1.0 - 2.0 * p)};
}

}  // namespace

std::string_view param_name(ParamId id) { return kNames[static_cast<std::size_t>(id)]; }

std::optional<ParamId> param_from_name(std::string_view name) {
  for (int i = 0; i < kParamCount; ++i)
    if (kNames[static_cast<std::size_t>(i)] == name) return static_cast<ParamId>(i);
  return std::nullopt;
}

bool param_is_positive(ParamId id) {
  switch (id) {
    case ParamId::tau2:
    case ParamId::phi:
    case ParamId::sigma2:
    case ParamId::sigma_beta:
    case ParamId::sigma_x:
    case ParamId::sigma_y:
      return true;
    default:
      return false;
  }
}

double get_param(const ThetaFull& theta, ParamId id) {
  switch (id) {
    case ParamId::mu: return theta.field.mu;
    case ParamId::tau2: return theta.field.tau2;
    case ParamId::phi: return theta.field.phi;
    case ParamId::sigma2: return theta.field.sigma2;
    case ParamId::alpha: return theta.movement.alpha;
    case ParamId::c: return theta.movement.c;
    case ParamId::sigma_beta: return theta.movement.sigma_beta;
    case ParamId::sigma_x: return theta.movement.sigma(0, 0);
    case ParamId::sigma_y: return theta.movement.sigma(1, 1);
    case ParamId::beta0: return theta.movement.beta0;
  }
  return 0.0;
}

void set_param(ThetaFull& theta, ParamId id, double value) {
  switch (id) {
    case ParamId::mu: theta.field.mu = value; break;
    case ParamId::tau2: theta.field.tau2 = value; break;
    case ParamId::phi: theta.field.phi = value; break;
    case ParamId::sigma2: theta.field.sigma2 = value; break;
    case ParamId::alpha: theta.movement.alpha = value; break;
    case ParamId::c: theta.movement.c = value; break;
    case ParamId::sigma_beta: theta.movement.sigma_beta = value; break;
    case ParamId::sigma_x: theta.movement.sigma(0, 0) = value; break;
    case ParamId::sigma_y: theta.movement.sigma(1, 1) = value; break;
    case ParamId::beta0: theta.movement.beta0 = value; break;
  }
}

PreferentialModel::PreferentialModel(MeshPtr mesh, TrackSet tracks, double grad_step)
    : mesh_(std::move(mesh)), tracks_(std::move(tracks)), grad_step_(grad_step) {
  validate_tracks(tracks_);
  if (!(grad_step_ > 0.0)) throw ConfigError("gradient step must be positive");
  fem_ = assemble_fem(*mesh_);

  const int m = mesh_->vertex_count();
  int offset = 0;
  for (std::size_t t = 0; t < tracks_.size(); ++t) {
    const Track& track = tracks_[t];
    const int n = static_cast<int>(track.size());
    beta_offset_.push_back(offset);

    StateChain chain;
    chain.first = m + offset;
    for (int k = 0; k + 1 < n; ++k)
      chain.dt.push_back(track.times[static_cast<std::size_t>(k + 1)] -
                         track.times[static_cast<std::size_t>(k)]);
    chains_.push_back(std::move(chain));

    for (int k = 0; k < n; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      Observation obs;
      obs.y = track.responses[ku];
      try {
        const Barycentric hit = mesh_->locate(track.locations[ku]);
        obs.vertex = hit.vertex;
        obs.weight = hit.weight;
      } catch (const OutOfHullError&) {
        std::ostringstream os;
        os << "track " << track.id << " observation " << k << " lies outside the fitting mesh";
        throw DataError(os.str());
      }
      observations_.push_back(obs);
    }

    for (int k = 1; k + 1 < n; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      Transition tr;
      tr.beta = m + offset + k;
      tr.dt = track.times[ku + 1] - track.times[ku];
      tr.step = track.locations[ku + 1] - track.locations[ku];
      tr.velocity = velocity_approx(track, ku);

      LinearForm value;
      std::array<LinearForm, 2> grad;
      try {
        value = interpolation_form(*mesh_, track.locations[ku]);
        grad = gradient_forms(*mesh_, track.locations[ku], grad_step_);
      } catch (const OutOfHullError&) {
        std::ostringstream os;
        os << "track " << track.id << " observation " << k
           << ": gradient stencil leaves the fitting mesh";
        throw DataError(os.str());
      }
      for (const auto* form : {&value, &grad[0], &grad[1]})
        for (const auto& [i, w] : form->terms)
          if (std::find(tr.vertex.begin(), tr.vertex.end(), i) == tr.vertex.end())
            tr.vertex.push_back(i);
      std::sort(tr.vertex.begin(), tr.vertex.end());
      const auto local = [&](int i) {
        return static_cast<int>(std::lower_bound(tr.vertex.begin(), tr.vertex.end(), i) -
                                tr.vertex.begin());
      };
      const auto nl = static_cast<Eigen::Index>(tr.vertex.size());
      tr.a = Eigen::VectorXd::Zero(nl);
      tr.g = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, nl);
      for (const auto& [i, w] : value.terms) tr.a[local(i)] += w;
      for (int d = 0; d < 2; ++d)
        for (const auto& [i, w] : grad[static_cast<std::size_t>(d)].terms) tr.g(d, local(i)) += w;
      transitions_.push_back(std::move(tr));
    }
    offset += n;
  }
  beta_dim_ = offset;
}

Eigen::VectorXd PreferentialModel::pack(const LatentState& latent) const {
  if (latent.s.size() != field_dim() || latent.beta.size() != beta_dim())
    throw DataError("latent state dimensions do not match the mesh and tracks");
  Eigen::VectorXd z(latent_dim());
  z << latent.s, latent.beta;
  return z;
}

LatentState PreferentialModel::unpack(const Eigen::VectorXd& z) const {
  check_dims(z);
  return {z.head(field_dim()), z.tail(beta_dim())};
}

LatentState PreferentialModel::initial_state(const ThetaFull& theta) const {
  return {Eigen::VectorXd::Zero(field_dim()), Eigen::VectorXd::Constant(beta_dim(), theta.movement.beta0)};
}

void PreferentialModel::check_dims(const Eigen::VectorXd& z) const {
  if (z.size() != latent_dim()) {
    std::ostringstream os;
    os << "latent vector has length " << z.size() << ", expected " << latent_dim();
    throw DataError(os.str());
  }
}

double PreferentialModel::joint_nll(const LatentState& latent, const ThetaFull& theta,
                                    const PrecisionBundle& bundle) const {
  return evaluate(pack(latent), theta, bundle, nullptr, nullptr);
}

NllBlocks PreferentialModel::joint_nll_blocks(const LatentState& latent, const ThetaFull& theta,
                                              const PrecisionBundle& bundle) const {
  NllBlocks blocks;
  evaluate(pack(latent), theta, bundle, nullptr, nullptr, &blocks);
  return blocks;
}

double PreferentialModel::evaluate(const Eigen::VectorXd& z, const ThetaFull& theta,
                                   const PrecisionBundle& bundle, Eigen::VectorXd* grad,
                                   std::vector<Triplet>* hessian, NllBlocks* blocks) const {
  check_dims(z);
  const int m = field_dim();
  if (bundle.Q.rows() != m) throw DataError("precision matrix does not match the mesh");
  const FieldParams& fp = theta.field;
  const MovementParams& mp = theta.movement;
  if (!(fp.tau2 > 0.0)) throw ConfigError("the joint likelihood needs a positive nugget tau2");
  if (!(mp.sigma_beta > 0.0)) throw ConfigError("the joint likelihood needs sigma_beta > 0");

  const Eigen::Matrix2d diffusion = mp.sigma * mp.sigma.transpose();
  const double diffusion_det = diffusion.determinant();
  if (!(diffusion_det > 0.0)) throw ConfigError("movement matrix Sigma is singular");
  const Eigen::Matrix2d diffusion_inv = diffusion.inverse();

  if (grad) grad->setZero(z.size());
  if (hessian) {
    hessian->clear();
    hessian->reserve(static_cast<std::size_t>(bundle.Q.nonZeros()) + 9 * observations_.size() +
                     transitions_.size() * 200 + 3 * static_cast<std::size_t>(beta_dim_));
  }
  NllBlocks b;

  // [S]
  const auto s = z.head(m);
  const Eigen::VectorXd qs = bundle.Q * s;
  b.field = 0.5 * s.dot(qs) - 0.5 * bundle.log_det + 0.5 * m * kLog2Pi;
  if (grad) grad->head(m) += qs;
  if (hessian)
    for (int j = 0; j < bundle.Q.outerSize(); ++j)
      for (SpMat::InnerIterator it(bundle.Q, j); it; ++it)
        hessian->emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());

  // [Y | X, S]
  const double inv_tau2 = 1.0 / fp.tau2;
  for (const Observation& obs : observations_) {
    double fitted = fp.mu;
    for (int k = 0; k < 3; ++k) fitted += obs.weight[k] * s[obs.vertex[k]];
    const double e = obs.y - fitted;
    b.response += 0.5 * (kLog2Pi + std::log(fp.tau2)) + 0.5 * e * e * inv_tau2;
    if (grad)
      for (int k = 0; k < 3; ++k) (*grad)[obs.vertex[k]] -= obs.weight[k] * e * inv_tau2;
    if (hessian)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          hessian->emplace_back(obs.vertex[i], obs.vertex[j],
                                obs.weight[i] * obs.weight[j] * inv_tau2);
  }

  // [X | S, beta]
  const double level_shift = fp.mu + mp.c;
  for (const Transition& tr : transitions_) {
    const auto nl = static_cast<Eigen::Index>(tr.vertex.size());
    Eigen::VectorXd sl(nl);
    for (Eigen::Index i = 0; i < nl; ++i) sl[i] = s[tr.vertex[static_cast<std::size_t>(i)]];
    const double u = level_shift + tr.a.dot(sl);
    const Eigen::Vector2d g = tr.g * sl;
    const Logistic f = logistic(z[tr.beta]);
    const Eigen::Vector2d forage = -mp.alpha * u * g;
    const Eigen::Vector2d mean = f.p * forage + (1.0 - f.p) * tr.velocity;
    const Eigen::Vector2d r = tr.step - mean * tr.dt;
    const Eigen::Matrix2d w_mat = diffusion_inv / tr.dt;
    const Eigen::Vector2d w = w_mat * r;
    b.movement += kLog2Pi + 0.5 * std::log(diffusion_det * tr.dt * tr.dt) + 0.5 * r.dot(w);

    if (!grad && !hessian) continue;

    // Jacobian of r over (local s, beta).
    const Eigen::Index nv = nl + 1;
    Eigen::Matrix<double, 2, Eigen::Dynamic> jac(2, nv);
    const double ds = tr.dt * f.p * mp.alpha;
    for (int c = 0; c < 2; ++c) {
      jac.row(c).head(nl) = ds * (g[c] * tr.a.transpose() + u * tr.g.row(c));
      jac(c, nl) = -tr.dt * f.d1 * (forage[c] - tr.velocity[c]);
    }
    if (grad) {
      const Eigen::VectorXd gl = jac.transpose() * w;
      for (Eigen::Index i = 0; i < nl; ++i) (*grad)[tr.vertex[static_cast<std::size_t>(i)]] += gl[i];
      (*grad)[tr.beta] += gl[nl];
    }
    if (hessian) {
      Eigen::MatrixXd h = jac.transpose() * w_mat * jac;
      const double cross = tr.dt * f.d1 * mp.alpha;
      for (int c = 0; c < 2; ++c) {
        const Eigen::VectorXd gc = tr.g.row(c).transpose();
        h.topLeftCorner(nl, nl) += (w[c] * ds) * (tr.a * gc.transpose() + gc * tr.a.transpose());
        const Eigen::VectorXd sb = (w[c] * cross) * (g[c] * tr.a + u * gc);
        h.col(nl).head(nl) += sb;
        h.row(nl).head(nl) += sb.transpose();
        h(nl, nl) += -w[c] * tr.dt * f.d2 * (forage[c] - tr.velocity[c]);
      }
      for (Eigen::Index i = 0; i < nv; ++i) {
        const int gi = i < nl ? tr.vertex[static_cast<std::size_t>(i)] : tr.beta;
        for (Eigen::Index j = 0; j < nv; ++j) {
          const int gj = j < nl ? tr.vertex[static_cast<std::size_t>(j)] : tr.beta;
          hessian->emplace_back(gi, gj, h(i, j));
        }
      }
    }
  }

  // [beta]
  const double sb2 = mp.sigma_beta * mp.sigma_beta;
  for (const StateChain& chain : chains_) {
    // Initial state: one interval of diffusion away from beta0.
    {
      const double var = sb2 * chain.dt.front();
      const double e = z[chain.first] - mp.beta0;
      b.states += 0.5 * (kLog2Pi + std::log(var)) + 0.5 * e * e / var;
      if (grad) (*grad)[chain.first] += e / var;
      if (hessian) hessian->emplace_back(chain.first, chain.first, 1.0 / var);
    }
    for (std::size_t k = 0; k < chain.dt.size(); ++k) {
      const int i = chain.first + static_cast<int>(k);
      const double var = sb2 * chain.dt[k];
      const double e = z[i + 1] - z[i];
      b.states += 0.5 * (kLog2Pi + std::log(var)) + 0.5 * e * e / var;
      if (grad) {
        (*grad)[i + 1] += e / var;
        (*grad)[i] -= e / var;
      }
      if (hessian) {
        hessian->emplace_back(i, i, 1.0 / var);
        hessian->emplace_back(i + 1, i + 1, 1.0 / var);
        hessian->emplace_back(i, i + 1, -1.0 / var);
        hessian->emplace_back(i + 1, i, -1.0 / var);
      }
    }
  }

  if (blocks) *blocks = b;
  const double total = b.total();
  if (!std::isfinite(total)) {
    std::ostringstream os;
    os << "joint negative log-likelihood is not finite (response " << b.response << ", movement "
       << b.movement << ", states " << b.states << ", field " << b.field << ")";
    throw NumericalError(os.str());
  }
  return total;
}

SpMat PreferentialModel::hessian(const Eigen::VectorXd& z, const ThetaFull& theta,
                                 const PrecisionBundle& bundle) const {
  std::vector<Triplet> triplets;
  evaluate(z, theta, bundle, nullptr, &triplets);
  SpMat h(latent_dim(), latent_dim());
  h.setFromTriplets(triplets.begin(), triplets.end());
  return h;
}

}  // namespace prefield
