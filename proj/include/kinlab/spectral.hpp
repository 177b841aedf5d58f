#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "kinlab/geometry.hpp"
#include "kinlab/master_sim.hpp"

namespace kinlab {

// ---------------------------------------------------------------------------
// Sphere Laplacian spectra

/// Unscaled eigenvalue on the unit sphere: j(j + 3N - 2) for C=1,
/// j(j + 3N - 5) for C=4. Exact in integer arithmetic.
std::int64_t eigenvalue_unscaled(const ManifoldSpec& spec, int j);

/// Eigenvalue of -Laplacian on the manifold: unscaled / (2 N eps0).
double eigenvalue_scaled(const ManifoldSpec& spec, int j);

/// N -> infinity limit 3j / (2 eps_eff).
double limit_eigenvalue(int j, double eps_eff);

struct SpectrumEntry {
  int j = 0;
  std::int64_t unscaled = 0;
  double scaled = 0.0;
  double limit = 0.0;
};

struct SpectrumTable {
  Conservation mode = Conservation::EnergyOnly;
  int n_particles = 0;
  double eps_eff = 1.0;
  std::vector<SpectrumEntry> entries;
};

SpectrumTable spectrum_table(const ManifoldSpec& spec, int j_max);

// ---------------------------------------------------------------------------
// Permutation-symmetric eigenfunctions sum_k p_j(w_k)

enum class HarmonicFamily {
  Deg1,       // w_s
  Deg2Mixed,  // w_s w_t, s != t
  Deg2Diff,   // w_s^2 - w_t^2, s != t
  Deg2Axial,  // w_1^2 + w_2^2 - 2 w_3^2
  Deg3Xyz,    // w_1 w_2 w_3
  Deg3Cubic,  // w_s^3 - 3 w_s w_t^2, s != t
};

struct HarmonicSpec {
  HarmonicFamily family = HarmonicFamily::Deg1;
  int sigma = 0;  // 0-based component indices
  int tau = 1;

  int degree() const;
  /// One-particle harmonic polynomial p(w).
  double eval(const Vec3& w) const;
  std::string name() const;
};

struct EigenfunctionValue {
  double value = 0.0;
  int degree = 0;
  /// Set when the family is constant on this manifold (degree 1 with C=4),
  /// so it does not represent a nonzero eigenvalue.
  bool constant_on_manifold = false;
};

/// sum_k p(v_k - u); u = 0 in energy-only mode.
EigenfunctionValue symmetric_eigenfunction(const ManifoldSpec& spec, const VelocityState& v,
                                           const HarmonicSpec& p);

// ---------------------------------------------------------------------------
// Variational bound for the pair-diffusion operator

/// psi = A (sum_i v_{i,1}^2 / 2 - C), C = N/3, on the standard manifold
/// (u = 0, eps = 1, C=4).
///
/// Normalization: we work in L^2 of the uniform probability measure
/// dtau / |M|. Then E[psi] = 0 and E[psi^2] = 1 give
///   A = (3 / (2N)) sqrt(3N - 1).
/// The surface-measure constant, A / sqrt(|M|), is kept in a_surface. The
/// Rayleigh quotient (psi, L psi) / (psi, psi) is the same in either
/// convention, since |M| cancels between numerator and denominator.
struct TrialFunction {
  int n_particles = 2;
  double c_const = 0.0;
  double a_const = 0.0;
  double a_surface = 0.0;

  static TrialFunction standard(int n);
};

/// Throws InvalidSpec unless spec is the standard manifold for tf.
double trial_eval(const TrialFunction& tf, const ManifoldSpec& spec, const VelocityState& v);

struct MonteCarloEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

/// Gradient blocks of a permutation-symmetric test function with respect to
/// v_1 and v_2 (particles 0 and 1).
using PairGradient = std::function<std::pair<Vec3, Vec3>(const VelocityState&)>;

/// Monte Carlo value of the quadratic form (psi, L psi) over uniform samples,
///   (N/2) E[ w_12 |Pperp_{v_2 - v_1} (grad_2 - grad_1) psi|^2 ],
/// w_12 = |v_2 - v_1|^{2+gamma}. Samples are split into fixed chunks with
/// streams derive_stream(seed, chunk), so any thread count gives the same
/// result. Throws if n_samples < 1000.
MonteCarloEstimate dirichlet_form_mc(const ManifoldSpec& spec, const KernelSpec& kernel,
                                     const PairGradient& gradient, std::size_t n_samples,
                                     std::uint64_t seed, unsigned threads = 1);

/// dirichlet_form_mc for the trial function, on ManifoldSpec::standard(N).
MonteCarloEstimate rayleigh_quotient_mc(const TrialFunction& tf, const KernelSpec& kernel,
                                        std::size_t n_samples, std::uint64_t seed,
                                        unsigned threads = 1);

/// Upper bound 9 / (5 sqrt(pi)) / sqrt(3N - 4) quoted for the Coulomb case.
double lambda1_bound(int n);

struct GapScanRow {
  int n_particles = 0;
  double estimate = 0.0;
  double std_error = 0.0;
  double bound = 0.0;
};

struct GapScanResult {
  std::vector<GapScanRow> rows;
  double exponent = 0.0;  // slope of log(estimate) vs log N
  double exponent_stderr = 0.0;
};

/// Rayleigh estimates over N_list (ascending, at least three values) and a
/// weighted least-squares power-law exponent (weights from the MC stderr).
GapScanResult gap_scan(std::span<const int> n_list, const KernelSpec& kernel, std::size_t n_samples,
                       std::uint64_t seed, unsigned threads = 1);

}  // namespace kinlab
