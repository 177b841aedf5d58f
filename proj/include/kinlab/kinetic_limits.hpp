#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "kinlab/geometry.hpp"
#include "kinlab/master_sim.hpp"
#include "kinlab/observables.hpp"

namespace kinlab {

/// Parameters of the limiting one-particle equations: drift velocity u and
/// co-moving energy per particle eps0 (eps = eps0 + |u|^2/2).
struct LimitParams {
  Vec3 u = Vec3::Zero();
  double eps0 = 1.0;

  static LimitParams from_spec(const ManifoldSpec& spec);
  void validate() const;
  /// Per-component standard deviation sqrt(2 eps0 / 3) of f_M.
  double sigma() const;
};

/// Drifting Maxwellian (3/(4 pi eps0))^{3/2} exp(-3|v-u|^2/(4 eps0)).
double maxwellian_eval(const LimitParams& p, const Vec3& v);

/// Exact n-velocity marginal of the uniform density on the energy sphere
/// (C=1), n = velocities.size() < N:
///   |S^{3(N-n)-1}| / |S^{3N-1}| (2N eps)^{-3n/2} (1 - s/(2N eps))^{(3(N-n)-2)/2},
/// s = sum |v_k|^2; zero outside the ball.
double stationary_marginal_eval(const ManifoldSpec& spec, std::span<const Vec3> velocities);

/// Cumulative distribution of |v_1| under the stationary 1-marginal, obtained
/// by quadrature of stationary_marginal_eval.
class StationarySpeedCdf {
 public:
  explicit StationarySpeedCdf(const ManifoldSpec& spec, int table_size = 4096);
  double operator()(double speed) const;
  double max_speed() const { return r_max_; }

 private:
  ManifoldSpec spec_;
  double r_max_;
  double step_;
  double log_norm_;
  double power_;
  std::vector<double> table_;
  double radial_density(double r) const;
};

/// Integral over R^3 of f, with an adaptive Gauss-Kronrod radial rule about
/// `center` (on [0, r_max]) times a fixed Gauss-Legendre x trapezoid angular
/// rule.
double integrate_r3(const std::function<double(const Vec3&)>& f, const Vec3& center, double r_max,
                    int angular_order = 24, double tol = 1e-10);

/// S(f|f_M) = -sum_cells f ln(f/f_M) dv with f_M integrated over each cell
/// (0 ln 0 = 0). Throws on an empty histogram.
double relative_entropy(const MarginalHistogram& f_hist, const LimitParams& p);

/// Equal-width cubic grid over [u - 5 sigma, u + 5 sigma]^3.
VelocityGrid entropy_grid(const LimitParams& p, int bins);

/// First and second moments of a one-particle density.
struct MomentState {
  Vec3 mean = Vec3::Zero();
  Mat3 second = Mat3::Zero();  // int v v^T f

  Mat3 covariance() const { return second - mean * mean.transpose(); }
};

/// Exact moment solution of the linear Fokker-Planck equation
///   d_t f = div(grad f + (3/(2 eps0)) (v - u) f):
///   m(t) - u = (m0 - u) e^{-kt},  C(t) = I/k + (C0 - I/k) e^{-2kt},  k = 3/(2 eps0).
MomentState fpe_moment_flow(const LimitParams& p, const Vec3& m0, const Mat3& M0, double t);

/// Exact moment solution of the Landau equation with the Maxwell-molecule
/// kernel (gamma = 0): mean and trace conserved, traceless part of the
/// covariance decays as exp(-12 t).
MomentState landau_moment_flow(const KernelSpec& kernel, const Vec3& m0, const Mat3& M0, double t);

/// Decay rate of the traceless covariance under the Landau equation (gamma = 0).
double landau_anisotropy_rate(const KernelSpec& kernel);

/// Same rate for the N-particle pair diffusion at gamma = 0, 12 N/(N-1); the
/// expected per-particle covariance closes exactly at finite N.
double pair_diffusion_anisotropy_rate(const KernelSpec& kernel, int n_particles);

/// Decay rate of one harmonic one-particle moment under the finite-N
/// marginal equation, with its N -> infinity limit.
struct MarginalRate {
  std::string observable;
  int degree = 0;
  double finite_rate = 0.0;
  double limit_rate = 0.0;
  /// Rate implied by the constant-|w| divergence-form hierarchy,
  /// j(j + 3N)/(2 N eps0); kept for comparison only.
  double constant_radius_rate = 0.0;
  /// True when the moment is pinned by symmetry and the constraints.
  bool stationary = false;
};

/// Rates for the n = 1 catalog: mean (degree 1), off-diagonal second moment
/// and second-moment difference (degree 2), cubic harmonic (degree 3).
std::vector<MarginalRate> finite_n_marginal_rates(const ManifoldSpec& spec);

}  // namespace kinlab
