#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>

#include "kinlab/geometry.hpp"
#include "kinlab/random.hpp"

namespace kinlab::testing {

inline VelocityState random_state(const ManifoldSpec& spec, std::uint64_t seed) {
  RandomStream rng = derive_stream(seed, 0xabc);
  return sample_uniform(spec, rng);
}

inline VecX random_vector(int size, std::uint64_t seed) {
  RandomStream rng = derive_stream(seed, 0xdef);
  VecX x(size);
  for (auto& v : x) v = rng.normal();
  return x;
}

struct MeanAndError {
  double mean;
  double se;
};

template <class Range>
MeanAndError mean_and_error(const Range& values) {
  double s = 0.0, q = 0.0;
  double n = 0.0;
  for (double v : values) {
    s += v;
    q += v * v;
    n += 1.0;
  }
  const double m = s / n;
  return {m, std::sqrt(std::max(0.0, q / n - m * m) / (n - 1.0))};
}

/// Laplace-Beltrami operator of f at V, summing second derivatives along
/// great circles through V in an orthonormal basis of the tangent space.
inline double manifold_laplacian_fd(const ManifoldSpec& spec, const VelocityState& v,
                                    const std::function<double(const VelocityState&)>& f,
                                    double h = 1e-3) {
  const int dim = spec.dim3();
  Eigen::MatrixXd p(dim, dim);
  for (int i = 0; i < dim; ++i) {
    VecX e = VecX::Zero(dim);
    e[i] = 1.0;
    p.col(i) = tangent_project_manifold(spec, v, e);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p);
  const VecX w = v.flat() - spec.center();
  const double r = w.norm();
  double lap = 0.0;
  for (int i = 0; i < dim; ++i) {
    if (eig.eigenvalues()[i] < 0.5) continue;
    const VecX t = eig.eigenvectors().col(i);
    auto g = [&](double s) {
      return f(VelocityState(spec.center() + std::cos(s / r) * w + r * std::sin(s / r) * t));
    };
    lap += (g(h) - 2.0 * g(0.0) + g(-h)) / (h * h);
  }
  return lap;
}

}  // namespace kinlab::testing
