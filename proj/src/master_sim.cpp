#include "kinlab/master_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "kinlab/observables.hpp"
#include "kinlab/parallel.hpp"

namespace kinlab {

void KernelSpec::validate() const {
  if (!(gamma > -5.0) || !std::isfinite(gamma)) {
    throw std::invalid_argument("kernel exponent gamma must satisfy gamma > -5");
  }
  if (!(cutoff > 0.0)) throw std::invalid_argument("kernel cutoff must be positive");
}

double KernelSpec::weight(double beta) const {
  const double p = 2.0 + gamma;
  if (p < 0.0 && beta < cutoff) return std::pow(cutoff, p);
  return std::pow(beta, p);
}

void SimConfig::validate() const {
  std::ostringstream err;
  if (!(dt > 0.0)) err << "dt must be positive; ";
  if (!(t_end >= dt)) err << "t_end must be at least dt; ";
  if (n_replicas < 1) err << "n_replicas must be at least 1; ";
  if (record_every < 1) err << "record_every must be at least 1; ";
  if (const auto* pd = std::get_if<PairDiffusion>(&process)) {
    try {
      pd->kernel.validate();
    } catch (const std::exception& e) {
      err << e.what() << "; ";
    }
  }
  if (!err.str().empty()) throw std::invalid_argument("invalid SimConfig: " + err.str());
}

long SimConfig::n_steps() const { return std::lround(t_end / dt); }

// ---------------------------------------------------------------------------

VelocityState step_sphere_diffusion_with_noise(const ManifoldSpec& spec, const VelocityState& v,
                                               double dt, const VecX& xi) {
  if (dt < 0.0) throw std::invalid_argument("dt must be nonnegative");
  if (dt == 0.0) return v;
  const VecX dx = tangent_project_manifold(spec, v, std::sqrt(2.0 * dt) * xi);
  return renormalize(spec, VelocityState(v.flat() + dx));
}

VelocityState step_sphere_diffusion(const ManifoldSpec& spec, const VelocityState& v, double dt,
                                    RandomStream& rng) {
  VecX xi(spec.dim3());
  for (auto& x : xi) x = rng.normal();
  return step_sphere_diffusion_with_noise(spec, v, dt, xi);
}

bool pair_update(VelocityState& v, int k, int l, const KernelSpec& kernel, double dt,
                 const Vec3& xi_k, const Vec3& xi_l) {
  const Vec3 vk = v.particle(k);
  const Vec3 vl = v.particle(l);
  const Vec3 d = vk - vl;
  const double beta = d.norm();
  if (beta < kernel.cutoff || beta == 0.0) return false;

  const int n = v.n_particles();
  const double a = 2.0 * kernel.weight(beta) / (n - 1);
  const double s = std::sqrt(2.0 * a * dt);

  // P_B xi has blocks +-(1/2) Pperp (xi_k - xi_l); the relative velocity
  // moves by s Pperp (xi_k - xi_l).
  const Vec3 n_old = d / beta;
  Vec3 rel = xi_k - xi_l;
  rel -= n_old * n_old.dot(rel);
  const Vec3 d_new = d + s * rel;

  const Vec3 alpha = vk + vl;
  const Vec3 n_new = d_new / d_new.norm();
  v.particle(k) = 0.5 * (alpha + beta * n_new);
  v.particle(l) = 0.5 * (alpha - beta * n_new);
  return true;
}

VelocityState step_pair_diffusion_with_noise(const ManifoldSpec& spec, const VelocityState& v,
                                             const KernelSpec& kernel, double dt,
                                             std::span<const PairNoise> sweep) {
  if (dt < 0.0) throw std::invalid_argument("dt must be nonnegative");
  if (spec.n_particles < 2) throw InvalidSpec("pair diffusion needs at least two particles");
  if (dt == 0.0) return v;
  VelocityState out = v;
  for (const auto& p : sweep) pair_update(out, p.k, p.l, kernel, dt, p.xi_k, p.xi_l);
  return renormalize(spec, out);
}

VelocityState step_pair_diffusion(const ManifoldSpec& spec, const VelocityState& v,
                                  const KernelSpec& kernel, double dt, RandomStream& rng) {
  if (dt < 0.0) throw std::invalid_argument("dt must be nonnegative");
  if (spec.n_particles < 2) throw InvalidSpec("pair diffusion needs at least two particles");
  if (dt == 0.0) return v;
  const int n = spec.n_particles;
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int k = 0; k < n; ++k)
    for (int l = k + 1; l < n; ++l) pairs.emplace_back(k, l);
  std::shuffle(pairs.begin(), pairs.end(), rng.engine());

  VelocityState out = v;
  for (const auto& [k, l] : pairs) {
    const Vec3 xi_k(rng.normal(), rng.normal(), rng.normal());
    const Vec3 xi_l(rng.normal(), rng.normal(), rng.normal());
    pair_update(out, k, l, kernel, dt, xi_k, xi_l);
  }
  return renormalize(spec, out);
}

// ---------------------------------------------------------------------------
// Test polynomials

TestPolynomial::TestPolynomial(std::string name, int n) : name_(std::move(name)), n_(n) {
  if (n < 1) throw std::invalid_argument("test polynomial needs N >= 1");
}

namespace {

void check_component(int n, int k, int sigma) {
  if (k < 0 || k >= n || sigma < 0 || sigma > 2) {
    throw std::out_of_range("test polynomial index out of range");
  }
}

}  // namespace

TestPolynomial TestPolynomial::mass(int n) {
  TestPolynomial p("m", n);
  p.constant_ = n;
  return p;
}

TestPolynomial TestPolynomial::energy(int n) {
  TestPolynomial p("e", n);
  for (int i = 0; i < 3 * n; ++i) p.hessian_.push_back({i, i, 1.0});
  return p;
}

TestPolynomial TestPolynomial::momentum(int n, int sigma) {
  check_component(n, 0, sigma);
  TestPolynomial p("p" + std::to_string(sigma + 1), n);
  for (int k = 0; k < n; ++k) p.linear_.emplace_back(3 * k + sigma, 1.0);
  return p;
}

TestPolynomial TestPolynomial::coordinate(int n, int k, int sigma) {
  check_component(n, k, sigma);
  TestPolynomial p("v" + std::to_string(k + 1) + std::to_string(sigma + 1), n);
  p.linear_.emplace_back(3 * k + sigma, 1.0);
  return p;
}

TestPolynomial TestPolynomial::product(int n, int k, int sigma, int l, int tau) {
  check_component(n, k, sigma);
  check_component(n, l, tau);
  TestPolynomial p("v" + std::to_string(k + 1) + std::to_string(sigma + 1) + "*v" +
                       std::to_string(l + 1) + std::to_string(tau + 1),
                   n);
  const int i = 3 * k + sigma;
  const int j = 3 * l + tau;
  if (i == j) {
    p.hessian_.push_back({i, i, 2.0});
  } else {
    p.hessian_.push_back({i, j, 1.0});
    p.hessian_.push_back({j, i, 1.0});
  }
  return p;
}

double TestPolynomial::value(const VelocityState& v) const {
  const VecX& x = v.flat();
  double s = constant_;
  for (const auto& [i, b] : linear_) s += b * x[i];
  for (const auto& e : hessian_) s += 0.5 * e.h * x[e.i] * x[e.j];
  return s;
}

VecX TestPolynomial::gradient(const VelocityState& v) const {
  const VecX& x = v.flat();
  VecX g = VecX::Zero(x.size());
  for (const auto& [i, b] : linear_) g[i] += b;
  for (const auto& e : hessian_) g[e.i] += e.h * x[e.j];
  return g;
}

double generator_apply(const VelocityState& v, const KernelSpec& kernel, const TestPolynomial& phi) {
  const int n = v.n_particles();
  if (phi.n_particles() != n) throw std::invalid_argument("polynomial/state size mismatch");
  if (n < 2) throw std::invalid_argument("pair generator needs N >= 2");
  const VecX g = phi.gradient(v);
  double total = 0.0;
  for (int k = 0; k < n; ++k) {
    for (int l = k + 1; l < n; ++l) {
      const Vec3 d = v.particle(k) - v.particle(l);
      const double beta = d.norm();
      if (beta < kernel.cutoff || beta == 0.0) continue;
      Mat3 b = Mat3::Zero();
      for (const auto& e : phi.hessian()) {
        const int a = e.i / 3;
        const int c = e.j / 3;
        if ((a != k && a != l) || (c != k && c != l)) continue;
        const double sign = (a == c) ? 1.0 : -1.0;
        b(e.i % 3, e.j % 3) += sign * e.h;
      }
      const Vec3 gkl = g.segment<3>(3 * k) - g.segment<3>(3 * l);
      // Pperp : B written with d^T B d / |d|^2 so conserved quantities cancel exactly.
      const double beta2 = d.dot(d);
      const Vec3 bd = b * d;
      const double second = b.trace() - d.dot(bd) / beta2;
      const double drift = -4.0 * d.dot(gkl) / beta2;
      total += kernel.weight(beta) * (second + drift);
    }
  }
  return total / (n - 1);
}

double laplace_beltrami_apply(const ManifoldSpec& spec, const VelocityState& v,
                              const TestPolynomial& phi) {
  const int n = spec.n_particles;
  if (phi.n_particles() != n) throw std::invalid_argument("polynomial/state size mismatch");
  const VecX w = v.flat() - spec.center();
  const double w2 = w.squaredNorm();
  // P : H = tr(H) - w^T H w / |w|^2 - (1/N) sum_sigma e_sigma^T H e_sigma.
  double trace = 0.0;
  double whw = 0.0;
  double ehe = 0.0;
  for (const auto& e : phi.hessian()) {
    if (e.i == e.j) trace += e.h;
    whw += w[e.i] * e.h * w[e.j];
    if (e.i % 3 == e.j % 3) ehe += e.h;
  }
  double contraction = trace - whw / w2;
  if (spec.mode == Conservation::EnergyMomentum) contraction -= ehe / n;
  const double curvature = spec.dimension() * w.dot(phi.gradient(v)) / w2;
  return contraction - curvature;
}

// ---------------------------------------------------------------------------
// Initial conditions and ensembles

InitialSampler make_initial_sampler(const std::string& name, double param) {
  if (name == "uniform") {
    return [](const ManifoldSpec& spec, RandomStream& rng) { return sample_uniform(spec, rng); };
  }
  if (name == "aligned") {
    return [](const ManifoldSpec& spec, RandomStream&) {
      if (spec.mode != Conservation::EnergyOnly) {
        throw InvalidSpec("aligned initial state needs energy-only mode");
      }
      VecX v = VecX::Zero(spec.dim3());
      const double speed = std::sqrt(2.0 * spec.eps);
      for (int k = 0; k < spec.n_particles; ++k) v[3 * k] = speed;
      return VelocityState(std::move(v));
    };
  }
  if (name == "shear") {
    return [](const ManifoldSpec& spec, RandomStream&) {
      const double a = std::sqrt(spec.eps0());
      const int half = spec.n_particles / 2;
      VecX v(spec.dim3());
      for (int k = 0; k < spec.n_particles; ++k) {
        const double sign = k < half ? 1.0 : -1.0;
        v.segment<3>(3 * k) = spec.u + sign * Vec3(a, a, 0.0);
      }
      return project_onto_manifold(spec, VelocityState(std::move(v)));
    };
  }
  if (name == "tagged_shift") {
    return [param](const ManifoldSpec& spec, RandomStream& rng) {
      const double sigma = std::sqrt(2.0 * spec.eps0() / 3.0);
      const int tagged = (spec.n_particles + 1) / 2;
      VecX v(spec.dim3());
      for (int k = 0; k < spec.n_particles; ++k) {
        const Vec3 g(rng.normal(), rng.normal(), rng.normal());
        const double shift = k < tagged ? param : -param;
        v.segment<3>(3 * k) = spec.u + sigma * g + Vec3(shift, 0.0, 0.0);
      }
      return project_onto_manifold(spec, VelocityState(std::move(v)));
    };
  }
  if (name == "anisotropic") {
    if (!(param > 0.0)) throw std::invalid_argument("anisotropic variance ratio must be positive");
    return [param](const ManifoldSpec& spec, RandomStream& rng) {
      const double s1 = std::sqrt(param);
      VecX v(spec.dim3());
      for (int k = 0; k < spec.n_particles; ++k) {
        const Vec3 g(s1 * rng.normal(), rng.normal(), rng.normal());
        v.segment<3>(3 * k) = spec.u + g;
      }
      return project_onto_manifold(spec, VelocityState(std::move(v)));
    };
  }
  throw std::invalid_argument("unknown initial condition '" + name + "'");
}

RunResult run_ensemble(const ManifoldSpec& spec, const SimConfig& config,
                       std::span<const Observable> observables, const InitialSampler& initial,
                       const RecordCallback& on_record) {
  spec.validate();
  config.validate();
  const InitialSampler sampler = initial ? initial : make_initial_sampler("uniform");
  const auto n_rep = static_cast<std::size_t>(config.n_replicas);

  RunResult result;
  result.final_snapshot.states.resize(n_rep);
  auto& states = result.final_snapshot.states;
  for (const auto& obs : observables) {
    ObservableSeries s;
    s.name = obs.name;
    s.n_replicas = config.n_replicas;
    result.series.push_back(std::move(s));
  }

  parallel_for(n_rep, config.threads, [&](std::size_t r) {
    RandomStream rng = derive_stream(config.seed, r, 0);
    states[r] = sampler(spec, rng);
  });

  std::vector<double> values(n_rep);
  auto record = [&](double t) {
    for (std::size_t o = 0; o < observables.size(); ++o) {
      parallel_for(n_rep, config.threads,
                   [&](std::size_t r) { values[r] = observables[o].eval(spec, states[r]); });
      result.series[o].append(t, values);
    }
    if (on_record) {
      result.final_snapshot.time = t;
      on_record(result.final_snapshot);
    }
  };

  record(0.0);
  const long n_steps = config.n_steps();
  for (long s0 = 0; s0 < n_steps; s0 += config.record_every) {
    const long s1 = std::min<long>(s0 + config.record_every, n_steps);
    parallel_for(n_rep, config.threads, [&](std::size_t r) {
      for (long s = s0; s < s1; ++s) {
        RandomStream rng = derive_stream(config.seed, r, static_cast<std::uint64_t>(s) + 1);
        if (const auto* pd = std::get_if<PairDiffusion>(&config.process)) {
          states[r] = step_pair_diffusion(spec, states[r], pd->kernel, config.dt, rng);
        } else {
          states[r] = step_sphere_diffusion(spec, states[r], config.dt, rng);
        }
      }
    });
    record(static_cast<double>(s1) * config.dt);
  }
  result.final_snapshot.time = static_cast<double>(n_steps) * config.dt;
  return result;
}

}  // namespace kinlab
