#include "kinlab/geometry.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace kinlab {

namespace {

void check_size(const ManifoldSpec& spec, const VelocityState& v) {
  if (v.flat().size() != spec.dim3()) {
    std::ostringstream msg;
    msg << "state has " << v.flat().size() << " components, manifold expects " << spec.dim3();
    throw std::invalid_argument(msg.str());
  }
}

void check_pair(const VelocityState& v, int k, int l) {
  const int n = v.n_particles();
  if (k < 0 || l < 0 || k >= n || l >= n || k == l) {
    throw std::out_of_range("pair indices must be distinct particles in [0, N)");
  }
}

}  // namespace

ManifoldSpec ManifoldSpec::energy_only(int n, double eps) {
  ManifoldSpec s{n, Conservation::EnergyOnly, Vec3::Zero(), eps};
  s.validate();
  return s;
}

ManifoldSpec ManifoldSpec::energy_momentum(int n, const Vec3& u, double eps) {
  ManifoldSpec s{n, Conservation::EnergyMomentum, u, eps};
  s.validate();
  return s;
}

ManifoldSpec ManifoldSpec::standard(int n) { return energy_momentum(n, Vec3::Zero(), 1.0); }

void ManifoldSpec::validate() const {
  if (n_particles < 1) throw InvalidSpec("n_particles must be positive");
  if (mode == Conservation::EnergyMomentum && n_particles < 2) {
    throw InvalidSpec("energy-momentum manifold needs at least 2 particles");
  }
  if (!(eps > 0.0) || !std::isfinite(eps)) throw InvalidSpec("eps must be positive and finite");
  if (!u.allFinite()) throw InvalidSpec("u must be finite");
  if (mode == Conservation::EnergyOnly && !u.isZero(0.0)) {
    throw InvalidSpec("u must be zero in energy-only mode");
  }
  if (mode == Conservation::EnergyMomentum && !(eps0() > 0.0)) {
    throw InvalidSpec("eps0 = eps - |u|^2/2 must be positive (eps > |u|^2/2)");
  }
}

double ManifoldSpec::eps0() const {
  return mode == Conservation::EnergyOnly ? eps : eps - 0.5 * u.squaredNorm();
}

VecX ManifoldSpec::center() const {
  VecX c = VecX::Zero(dim3());
  if (mode == Conservation::EnergyMomentum) {
    for (int k = 0; k < n_particles; ++k) c.segment<3>(3 * k) = u;
  }
  return c;
}

VelocityState::VelocityState(VecX v) : v_(std::move(v)) {
  if (v_.size() % 3 != 0) throw std::invalid_argument("state length must be a multiple of 3");
}

Vec3 VelocityState::momentum() const {
  Vec3 p = Vec3::Zero();
  for (int k = 0; k < n_particles(); ++k) p += particle(k);
  return p;
}

ConstraintResidual constraint_residual(const ManifoldSpec& spec, const VelocityState& v) {
  check_size(spec, v);
  const double n = spec.n_particles;
  ConstraintResidual r;
  r.energy = std::abs(v.energy() - n * spec.eps) / (n * spec.eps);
  if (spec.mode == Conservation::EnergyMomentum) {
    r.momentum = (v.momentum() - n * spec.u).cwiseAbs().maxCoeff() / std::sqrt(n);
  }
  return r;
}

bool is_feasible(const ManifoldSpec& spec, const VelocityState& v, double rel_tol) {
  const auto r = constraint_residual(spec, v);
  return r.energy <= rel_tol && r.momentum <= rel_tol;
}

double default_cutoff(const ManifoldSpec& spec) { return 1e-8 * std::sqrt(spec.eps); }

VelocityState sample_uniform(const ManifoldSpec& spec, RandomStream& rng) {
  spec.validate();
  VecX x(spec.dim3());
  for (auto& xi : x) xi = rng.normal();
  return project_onto_manifold(spec, VelocityState(std::move(x)));
}

VelocityState project_onto_manifold(const ManifoldSpec& spec, const VelocityState& v) {
  spec.validate();
  check_size(spec, v);
  const int n = spec.n_particles;
  VecX w = v.flat();
  if (spec.mode == Conservation::EnergyMomentum) {
    const Vec3 mean = v.momentum() / n;
    for (int k = 0; k < n; ++k) w.segment<3>(3 * k) -= mean;
  }
  const double norm = w.norm();
  if (!(norm > 0.0)) throw DegenerateState("zero centred norm: every velocity equals u");
  w *= std::sqrt(spec.radius2()) / norm;
  if (spec.mode == Conservation::EnergyMomentum) {
    for (int k = 0; k < n; ++k) w.segment<3>(3 * k) += spec.u;
  }
  return VelocityState(std::move(w));
}

VelocityState renormalize(const ManifoldSpec& spec, const VelocityState& v) {
  check_size(spec, v);
  if (constraint_residual(spec, v).energy > 0.1) {
    throw std::invalid_argument("renormalize: state is more than 10% off the energy constraint");
  }
  return project_onto_manifold(spec, v);
}

VecX tangent_project_manifold(const ManifoldSpec& spec, const VelocityState& v, const VecX& x) {
  check_size(spec, v);
  if (x.size() != spec.dim3()) throw std::invalid_argument("vector length mismatch");
  const int n = spec.n_particles;
  VecX y = x;
  VecX w = v.flat();
  if (spec.mode == Conservation::EnergyMomentum) {
    Vec3 mean = Vec3::Zero();
    for (int k = 0; k < n; ++k) mean += x.segment<3>(3 * k);
    mean /= n;
    for (int k = 0; k < n; ++k) {
      y.segment<3>(3 * k) -= mean;
      w.segment<3>(3 * k) -= spec.u;
    }
  }
  const double w2 = w.squaredNorm();
  if (!(w2 > 0.0)) throw DegenerateState("tangent space undefined at V = U");
  // w is orthogonal to every e_sigma, so the two corrections commute.
  y -= w * (w.dot(y) / w2);
  return y;
}

Mat3 perp_projector(const Vec3& d) {
  const double d2 = d.squaredNorm();
  return Mat3::Identity() - d * d.transpose() / d2;
}

VecX pair_projector_apply(const VelocityState& v, int k, int l, const VecX& x, double cutoff) {
  check_pair(v, k, l);
  if (x.size() != v.flat().size()) throw std::invalid_argument("vector length mismatch");
  const Vec3 d = v.particle(k) - v.particle(l);
  const double beta = d.norm();
  if (!(beta >= cutoff) || beta == 0.0) {
    throw DegenerateState("pair below the singularity cutoff");
  }
  const Vec3 n = d / beta;
  Vec3 rel = x.segment<3>(3 * k) - x.segment<3>(3 * l);
  rel -= n * n.dot(rel);
  VecX y = VecX::Zero(x.size());
  y.segment<3>(3 * k) = 0.5 * rel;
  y.segment<3>(3 * l) = -0.5 * rel;
  return y;
}

PairFrame pair_frame(const VelocityState& v, int k, int l, double cutoff) {
  check_pair(v, k, l);
  PairFrame f;
  f.k = k;
  f.l = l;
  const Vec3 d = v.particle(k) - v.particle(l);
  f.alpha = v.particle(k) + v.particle(l);
  f.beta = d.norm();
  f.undefined = !(f.beta > 0.0) || f.beta < cutoff;
  if (!f.undefined) f.n = d / f.beta;
  return f;
}

double log_sphere_area(int dim, double radius) {
  if (dim < 0) throw std::invalid_argument("sphere dimension must be nonnegative");
  if (!(radius > 0.0)) throw std::invalid_argument("sphere radius must be positive");
  const double h = 0.5 * (dim + 1);
  return std::log(2.0) + h * std::log(std::numbers::pi) + dim * std::log(radius) - std::lgamma(h);
}

double sphere_area(int dim, double radius) { return std::exp(log_sphere_area(dim, radius)); }

}  // namespace kinlab
