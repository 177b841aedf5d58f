#pragma once

#include <span>
#include <string>
#include <vector>

#include "kinlab/geometry.hpp"

namespace kinlab {

/// Finite ensemble {V_alpha} at one instant; all states share a ManifoldSpec.
struct EnsembleSnapshot {
  double time = 0.0;
  std::vector<VelocityState> states;
};

/// Time-indexed ensemble means of one observable.
struct ObservableSeries {
  std::string name;
  std::vector<double> times;
  std::vector<double> means;
  std::vector<double> stderrs;
  int n_replicas = 0;

  std::size_t size() const { return times.size(); }

  /// Appends mean and standard error of per-replica values. The reduction
  /// order is fixed, so results do not depend on how values were produced.
  void append(double time, std::span<const double> values);
};

}  // namespace kinlab
