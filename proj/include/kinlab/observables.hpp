#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kinlab/ensemble.hpp"
#include "kinlab/geometry.hpp"

namespace kinlab {

/// A named scalar function of one N-particle state.
struct Observable {
  std::string name;
  std::function<double(const ManifoldSpec&, const VelocityState&)> eval;
};

/// Looks up an observable by name. Accepted names (sigma, tau in 1..3):
///   energy             e(V)/N
///   momentum(s)        p_s(V)/N
///   P1_deg1(s)         sum_k w_{k,s}
///   P1_deg2(s,t)       sum_k w_{k,s} w_{k,t}            (s != t)
///   P1_diff2(s,t)      sum_k (w_{k,s}^2 - w_{k,t}^2)     (s != t)
///   P1_axial2          sum_k (w_{k,1}^2 + w_{k,2}^2 - 2 w_{k,3}^2)
///   P1_deg3_xyz        sum_k w_{k,1} w_{k,2} w_{k,3}
///   P1_deg3_cubic(s,t) sum_k (w_{k,s}^3 - 3 w_{k,s} w_{k,t}^2)  (s != t)
///   group_mean(s)      mean of w_{k,s} over the first ceil(N/2) particles
///   anisotropy(s)      (1/N) sum_k (w_{k,s}^2 - |w_k|^2/3)
/// with w_k = v_k - u (u = 0 in energy-only mode). Throws
/// std::invalid_argument for unknown names.
Observable parse_observable(const std::string& name);

/// Evaluates an observable on every snapshot of a stored run.
ObservableSeries moment_series(const ManifoldSpec& spec, std::span<const EnsembleSnapshot> run,
                               const Observable& observable);

// ---------------------------------------------------------------------------
// Histograms

/// Cubic grid of bins^3 equal cells over [lower, lower + width)^3.
struct VelocityGrid {
  Vec3 lower = Vec3::Constant(-1.0);
  double width = 2.0;
  int bins = 16;

  static VelocityGrid centered(const Vec3& center, double half_width, int bins);

  double cell_width() const { return width / bins; }
  double cell_volume() const;
  std::int64_t cell_count() const;
  /// Flat cell index, or -1 outside the grid.
  std::int64_t cell_index(const Vec3& v) const;
  Vec3 cell_lower(std::int64_t index) const;
  bool operator==(const VelocityGrid& other) const;
};

/// Empirical n-particle marginal (n = 1 or 2) on a VelocityGrid (bins^{3n}
/// cells). Stored sparsely as sorted (cell, probability) pairs; the
/// probabilities of in-grid samples sum to one.
struct MarginalHistogram {
  int order = 1;
  VelocityGrid grid;
  std::vector<std::pair<std::int64_t, double>> cells;
  std::uint64_t samples = 0;
  double outside_fraction = 0.0;

  double total() const;
  /// Dense bins^3 probability vector (order 1 only).
  std::vector<double> dense() const;
};

/// Pools the snapshot over replicas and over particle labels: every particle
/// for n = 1, every ordered pair (k, l), k != l, for n = 2.
MarginalHistogram marginal_histogram(const EnsembleSnapshot& snapshot, int order,
                                     const VelocityGrid& grid);

/// L1 distance between a 2-marginal and the product of 1-marginals.
double chaos_distance(const MarginalHistogram& h2, const MarginalHistogram& h1);

// ---------------------------------------------------------------------------
// Decay-rate fits

struct FitOptions {
  std::optional<double> t_min;
  std::optional<double> t_max;
  /// Equilibrium value subtracted before taking logarithms.
  double offset = 0.0;
  /// Points with |mean - offset| <= trim_sigma * stderr are dropped.
  double trim_sigma = 5.0;
};

struct DecayFit {
  double rate = 0.0;
  double rate_stderr = 0.0;
  double ci_low = 0.0;   // 95% interval
  double ci_high = 0.0;
  double r_squared = 1.0;
  int n_points = 0;
  bool non_exponential = false;  // r_squared < 0.9

  bool contains(double value, double slack = 1e-12) const {
    return value >= ci_low - slack && value <= ci_high + slack;
  }
};

/// Weighted least squares of ln|mean - offset| against t. Weights come from
/// the propagated standard errors; an all-zero stderr series is fit
/// unweighted. Throws if fewer than two points survive the window, or if the
/// series changes sign on the window.
DecayFit decay_rate_fit(const ObservableSeries& series, const FitOptions& options = {});

// ---------------------------------------------------------------------------
// Goodness of fit

/// Kolmogorov-Smirnov statistic sup |F_n - F| for the given cdf.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

/// Asymptotic Kolmogorov critical value at level alpha for n samples, with
/// Stephens' finite-n correction.
double ks_critical_value(std::size_t n, double alpha = 0.01);

}  // namespace kinlab
