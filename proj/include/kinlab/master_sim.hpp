#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "kinlab/ensemble.hpp"
#include "kinlab/geometry.hpp"
#include "kinlab/random.hpp"

namespace kinlab {

struct Observable;

/// Collision kernel |v - w|^{2+gamma} Pperp; gamma = -3 is the Coulomb case.
struct KernelSpec {
  double gamma = -3.0;
  double cutoff = 1e-8;

  void validate() const;

  /// Pair diffusivity weight beta^{2+gamma}. For gamma < -2 the weight is
  /// capped at cutoff^{2+gamma}.
  double weight(double beta) const;
};

struct SphereDiffusion {};
struct PairDiffusion {
  KernelSpec kernel;
};
using Process = std::variant<SphereDiffusion, PairDiffusion>;

struct SimConfig {
  double dt = 1e-3;
  double t_end = 1.0;
  int n_replicas = 1;
  std::uint64_t seed = 0;
  Process process = SphereDiffusion{};
  int record_every = 1;
  unsigned threads = 1;

  void validate() const;
  long n_steps() const;
};

// ---------------------------------------------------------------------------
// Single steps

/// One projected Euler-Maruyama step of Brownian motion on the manifold,
/// v' = renormalize(v + sqrt(2 dt) P xi).
VelocityState step_sphere_diffusion(const ManifoldSpec& spec, const VelocityState& v, double dt,
                                    RandomStream& rng);

/// Same step with the 3N standard normals supplied by the caller.
VelocityState step_sphere_diffusion_with_noise(const ManifoldSpec& spec, const VelocityState& v,
                                               double dt, const VecX& xi);

/// Noise for one pair visit of the pair-diffusion sweep.
struct PairNoise {
  int k = 0;
  int l = 1;
  Vec3 xi_k = Vec3::Zero();
  Vec3 xi_l = Vec3::Zero();
};

/// One step of the pairwise (Balescu-Prigogine type) diffusion
///   -L = (1/(N-1)) sum_{k != l} |v_k - v_l|^{2+gamma} Laplacian(B^2_{kl}).
/// Every unordered pair is visited once in a freshly shuffled order; pair
/// (k,l) receives sqrt(2 a dt) P_B xi with a = 2 w_kl/(N-1), after which
/// v_k + v_l and |v_k - v_l| are restored exactly. Pairs closer than the
/// kernel cutoff are skipped.
VelocityState step_pair_diffusion(const ManifoldSpec& spec, const VelocityState& v,
                                  const KernelSpec& kernel, double dt, RandomStream& rng);

/// Same step with an explicit sweep (order and noise).
VelocityState step_pair_diffusion_with_noise(const ManifoldSpec& spec, const VelocityState& v,
                                             const KernelSpec& kernel, double dt,
                                             std::span<const PairNoise> sweep);

/// Visits pair (k,l) once: increment along the B^2_{kl} tangent plane, then
/// restores alpha and beta. Returns false when the pair is below cutoff.
bool pair_update(VelocityState& v, int k, int l, const KernelSpec& kernel, double dt,
                 const Vec3& xi_k, const Vec3& xi_l);

// ---------------------------------------------------------------------------
// Generators on a catalog of test polynomials

/// Quadratic test polynomial phi(V) = c + b.V + (1/2) V^T H V with sparse H.
class TestPolynomial {
 public:
  struct Entry {
    int i;
    int j;
    double h;
  };

  static TestPolynomial mass(int n);
  static TestPolynomial energy(int n);
  static TestPolynomial momentum(int n, int sigma);
  /// v_{k,sigma}
  static TestPolynomial coordinate(int n, int k, int sigma);
  /// v_{k,sigma} v_{l,tau}
  static TestPolynomial product(int n, int k, int sigma, int l, int tau);

  const std::string& name() const { return name_; }
  int n_particles() const { return n_; }
  double value(const VelocityState& v) const;
  VecX gradient(const VelocityState& v) const;
  /// Every nonzero H(i,j), both triangles listed.
  const std::vector<Entry>& hessian() const { return hessian_; }

 private:
  TestPolynomial(std::string name, int n);

  std::string name_;
  int n_ = 0;
  double constant_ = 0.0;
  std::vector<std::pair<int, double>> linear_;
  std::vector<Entry> hessian_;
};

/// Exact action of the pair-diffusion generator on a catalog polynomial:
///   (-L phi)(V) = (1/(N-1)) sum_{k<l} w_kl [ Pperp : B_kl - 4 (v_k - v_l).g_kl / beta^2 ]
/// with g_kl = grad_k phi - grad_l phi and B_kl = H_kk - H_kl - H_lk + H_ll.
/// Pairs below the kernel cutoff contribute zero, as in the simulator.
double generator_apply(const VelocityState& v, const KernelSpec& kernel, const TestPolynomial& phi);

/// Exact Laplace-Beltrami action on the manifold,
///   P : H - (3N - C) (w . grad phi) / |w|^2.
double laplace_beltrami_apply(const ManifoldSpec& spec, const VelocityState& v,
                              const TestPolynomial& phi);

// ---------------------------------------------------------------------------
// Ensembles

using InitialSampler = std::function<VelocityState(const ManifoldSpec&, RandomStream&)>;

/// Named initial conditions:
///   "uniform"       equilibrium sample
///   "aligned"       every particle at sqrt(2 eps) e_1 (C=1 only)
///   "shear"         half the particles at u + a(1,1,0), half at u - a(1,1,0)
///   "tagged_shift"  Gaussian, first half shifted by +param e_1, rest by -param e_1
///   "anisotropic"   Gaussian with variance ratio param : 1 : 1
/// All but "uniform" and "aligned" are projected onto the manifold.
InitialSampler make_initial_sampler(const std::string& name, double param = 1.0);

struct RunResult {
  std::vector<ObservableSeries> series;
  EnsembleSnapshot final_snapshot;
};

using RecordCallback = std::function<void(const EnsembleSnapshot&)>;

/// Evolves n_replicas independent states and records ensemble means every
/// record_every steps (and at t = 0). Replica r at step s uses the stream
/// derive_stream(seed, r, s + 1); the initial draw uses step 0. Results are
/// bit-identical for any thread count.
RunResult run_ensemble(const ManifoldSpec& spec, const SimConfig& config,
                       std::span<const Observable> observables,
                       const InitialSampler& initial = {}, const RecordCallback& on_record = {});

}  // namespace kinlab
