#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "prefield/fem.hpp"
#include "prefield/gmrf.hpp"
#include "prefield/mesh.hpp"
#include "prefield/movement.hpp"
#include "prefield/params.hpp"

namespace prefield {

/// Scalar parameters addressable by fit masks, in optimizer order. The Matern smoothness is
/// not listed: it is fixed at 2 on every inference path.
enum class ParamId : int {
  mu,
  tau2,
  phi,
  sigma2,
  alpha,
  c,
  sigma_beta,
  sigma_x,
  sigma_y,
  beta0,
};
inline constexpr int kParamCount = 10;

std::string_view param_name(ParamId id);
std::optional<ParamId> param_from_name(std::string_view name);
/// Parameters constrained to be positive (log-transformed when optimizing).
bool param_is_positive(ParamId id);
double get_param(const ThetaFull& theta, ParamId id);
void set_param(ThetaFull& theta, ParamId id, double value);

/// Latent vectors of the preferential model: field values at mesh vertices and one
/// behavioural state per observation (tracks concatenated in order).
struct LatentState {
  Eigen::VectorXd s;
  Eigen::VectorXd beta;
};

/// The four negative log-density blocks of the joint likelihood.
struct NllBlocks {
  double response = 0.0;  ///< -log [Y | X, S]
  double movement = 0.0;  ///< -log [X | S, beta]
  double states = 0.0;    ///< -log [beta]
  double field = 0.0;     ///< -log [S]
  double total() const { return response + movement + states + field; }
};

/// Data and precomputed geometry for the joint likelihood of responses, locations, behavioural
/// states and the discretised field.
///
/// Each track's first two locations enter through a constant (uniform) initial density and are
/// dropped. For 0-based k = 1..n-2 the transition X_{k+1} | X_k is bivariate normal with mean
/// X_k + mu_k dt_k and covariance Sigma Sigma^T dt_k, where the drift mixes the foraging term
/// -alpha (mu + S(X_k) + c) grad S(X_k) and the velocity (X_k - X_{k-1}) / (t_k - t_{k-1}) with
/// weight f(beta_k). beta follows a Gaussian random walk started from beta_0 ~
/// N(beta0, sigma_beta^2 (t_1 - t_0)).
class PreferentialModel {
 public:
  PreferentialModel(MeshPtr mesh, TrackSet tracks, double grad_step);

  const Mesh& mesh() const { return *mesh_; }
  const MeshPtr& mesh_ptr() const { return mesh_; }
  const FemMatrices& fem() const { return fem_; }
  const TrackSet& tracks() const { return tracks_; }
  double grad_step() const { return grad_step_; }

  int field_dim() const { return mesh_->vertex_count(); }
  int beta_dim() const { return beta_dim_; }
  int latent_dim() const { return field_dim() + beta_dim_; }
  /// Position of track t's first behavioural state inside LatentState::beta.
  int beta_offset(std::size_t track) const { return beta_offset_[track]; }
  int observation_count() const { return static_cast<int>(observations_.size()); }

  /// Stacks (s, beta) into one vector and back.
  Eigen::VectorXd pack(const LatentState& latent) const;
  LatentState unpack(const Eigen::VectorXd& z) const;
  /// s = 0, beta = beta0 everywhere.
  LatentState initial_state(const ThetaFull& theta) const;

  /// Joint negative log-likelihood; `bundle` must be built from theta.field.
  double joint_nll(const LatentState& latent, const ThetaFull& theta,
                   const PrecisionBundle& bundle) const;
  NllBlocks joint_nll_blocks(const LatentState& latent, const ThetaFull& theta,
                             const PrecisionBundle& bundle) const;

  /// Value of the joint NLL at packed z, optionally with its gradient and the lower+upper
  /// Hessian entries as triplets (duplicates summed on assembly). The triplet sparsity pattern
  /// depends only on the data, never on theta or z.
  double evaluate(const Eigen::VectorXd& z, const ThetaFull& theta, const PrecisionBundle& bundle,
                  Eigen::VectorXd* grad, std::vector<Eigen::Triplet<double>>* hessian,
                  NllBlocks* blocks = nullptr) const;

  /// Sparse Hessian assembled from evaluate().
  SpMat hessian(const Eigen::VectorXd& z, const ThetaFull& theta,
                const PrecisionBundle& bundle) const;

 private:
  struct Observation {
    double y = 0.0;
    std::array<int, 3> vertex{};
    std::array<double, 3> weight{};
  };
  struct Transition {
    int beta = 0;                  ///< index into the packed latent vector
    double dt = 0.0;
    Vec2 step = Vec2::Zero();      ///< X_{k+1} - X_k
    Vec2 velocity = Vec2::Zero();  ///< (X_k - X_{k-1}) / (t_k - t_{k-1})
    std::vector<int> vertex;       ///< local vertex list
    Eigen::VectorXd a;             ///< interpolation weights over the local vertices
    Eigen::Matrix<double, 2, Eigen::Dynamic> g;  ///< gradient weights over the local vertices
  };
  struct StateChain {
    int first = 0;  ///< packed index of beta_0
    std::vector<double> dt;
  };

  void check_dims(const Eigen::VectorXd& z) const;

  MeshPtr mesh_;
  FemMatrices fem_;
  TrackSet tracks_;
  double grad_step_;
  int beta_dim_ = 0;
  std::vector<int> beta_offset_;
  std::vector<Observation> observations_;
  std::vector<Transition> transitions_;
  std::vector<StateChain> chains_;
};

}  // namespace prefield
