#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>

#include "kinlab/random.hpp"

namespace kinlab {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;

/// Thrown for parameter sets that do not describe a valid manifold.
class InvalidSpec : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a configuration has no well-defined tangent space or cannot be
/// restored onto the manifold (e.g. every velocity equal to u).
class DegenerateState : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Conservation {
  EnergyOnly,      // C = 1
  EnergyMomentum,  // C = 4
};

/// Constant-energy (C=1) or constant-energy-and-momentum (C=4) velocity
/// manifold for N particles, with energy per particle eps and mean velocity u.
struct ManifoldSpec {
  int n_particles = 2;
  Conservation mode = Conservation::EnergyOnly;
  Vec3 u = Vec3::Zero();
  double eps = 1.0;

  static ManifoldSpec energy_only(int n, double eps);
  static ManifoldSpec energy_momentum(int n, const Vec3& u, double eps);
  /// u = 0, eps = 1, C = 4: the normalization used by the trial function.
  static ManifoldSpec standard(int n);

  /// Throws InvalidSpec with a message naming the violated constraint.
  void validate() const;

  int dim3() const { return 3 * n_particles; }
  int codim() const { return mode == Conservation::EnergyOnly ? 1 : 4; }
  /// Dimension 3N - C of the manifold.
  int dimension() const { return dim3() - codim(); }
  /// eps0 = eps - |u|^2/2; equals eps in EnergyOnly mode.
  double eps0() const;
  /// Squared sphere radius: 2 N eps (C=1) or 2 N eps0 (C=4).
  double radius2() const { return 2.0 * n_particles * eps0(); }
  /// Centre U = (u, ..., u) of the sphere (zero for C=1).
  VecX center() const;
};

/// A point V = (v_1, ..., v_N) in R^{3N}.
class VelocityState {
 public:
  VelocityState() = default;
  explicit VelocityState(VecX v);

  int n_particles() const { return static_cast<int>(v_.size() / 3); }
  const VecX& flat() const { return v_; }
  VecX& flat() { return v_; }

  auto particle(int k) const { return v_.segment<3>(3 * k); }
  auto particle(int k) { return v_.segment<3>(3 * k); }

  /// e(V) = (1/2) sum |v_k|^2.
  double energy() const { return 0.5 * v_.squaredNorm(); }
  /// p(V) = sum v_k.
  Vec3 momentum() const;

 private:
  VecX v_;
};

/// Relative deviation of the state from the manifold constraints.
struct ConstraintResidual {
  double energy = 0.0;    // |e(V) - N eps| / (N eps)
  double momentum = 0.0;  // max_sigma |p_sigma - N u_sigma| / sqrt(N); 0 for C=1
};

ConstraintResidual constraint_residual(const ManifoldSpec& spec, const VelocityState& v);

/// True when the energy residual and momentum residual are both within rel_tol.
bool is_feasible(const ManifoldSpec& spec, const VelocityState& v, double rel_tol = 1e-9);

/// Default singularity cutoff for |v_k - v_l|: 1e-8 sqrt(eps).
double default_cutoff(const ManifoldSpec& spec);

/// Uniform (surface-measure) sample on the manifold via Gaussian projection
/// and rescaling.
VelocityState sample_uniform(const ManifoldSpec& spec, RandomStream& rng);

/// Maps an arbitrary point onto the manifold: shift to momentum N u, then
/// rescale deviations about U to the sphere radius. No closeness requirement.
VelocityState project_onto_manifold(const ManifoldSpec& spec, const VelocityState& v);

/// Restores the constraints after a small discrete step. The input must lie
/// within 10% of the energy constraint.
VelocityState renormalize(const ManifoldSpec& spec, const VelocityState& v);

/// Tangent-space projection P x at a feasible V.
///   C=1: P = I - V V^T / |V|^2
///   C=4: P = I - w w^T / |w|^2 - (1/N) sum_sigma e_sigma e_sigma^T, w = V - U
VecX tangent_project_manifold(const ManifoldSpec& spec, const VelocityState& v, const VecX& x);

/// Projector onto the tangent plane of the pair-collision manifold B^2_{kl}
/// (fixed v_k + v_l, fixed |v_k - v_l|, other particles frozen). Only blocks
/// k and l of the result are nonzero:
///   y_k = (1/2) Pperp (x_k - x_l),  y_l = -y_k,
/// where Pperp projects orthogonally to v_k - v_l. Throws DegenerateState if
/// |v_k - v_l| < cutoff.
VecX pair_projector_apply(const VelocityState& v, int k, int l, const VecX& x, double cutoff);

/// 3x3 projector orthogonal to a nonzero vector d.
Mat3 perp_projector(const Vec3& d);

struct PairFrame {
  int k = 0;
  int l = 1;
  Vec3 alpha = Vec3::Zero();  // v_k + v_l
  double beta = 0.0;          // |v_k - v_l|
  Vec3 n = Vec3::Zero();      // (v_k - v_l) / beta, zero when undefined
  bool undefined = true;      // beta below the cutoff

  Vec3 reconstruct_k() const { return 0.5 * (alpha + beta * n); }
  Vec3 reconstruct_l() const { return 0.5 * (alpha - beta * n); }
};

PairFrame pair_frame(const VelocityState& v, int k, int l, double cutoff = 0.0);

/// log |S^D_r| = log(2 pi^{(D+1)/2} r^D / Gamma((D+1)/2)); stable for D ~ 10^4.
double log_sphere_area(int dim, double radius);
double sphere_area(int dim, double radius);

}  // namespace kinlab
