#include "kinlab/kinetic_limits.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/legendre.hpp>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "kinlab/spectral.hpp"

namespace kinlab {

namespace {
constexpr double kPi = std::numbers::pi;
}

LimitParams LimitParams::from_spec(const ManifoldSpec& spec) {
  spec.validate();
  return LimitParams{spec.u, spec.eps0()};
}

void LimitParams::validate() const {
  if (!(eps0 > 0.0) || !std::isfinite(eps0)) throw std::invalid_argument("eps0 must be positive");
}

double LimitParams::sigma() const { return std::sqrt(2.0 * eps0 / 3.0); }

double maxwellian_eval(const LimitParams& p, const Vec3& v) {
  p.validate();
  const double norm = std::pow(3.0 / (4.0 * kPi * p.eps0), 1.5);
  return norm * std::exp(-3.0 * (v - p.u).squaredNorm() / (4.0 * p.eps0));
}

double stationary_marginal_eval(const ManifoldSpec& spec, std::span<const Vec3> velocities) {
  spec.validate();
  if (spec.mode != Conservation::EnergyOnly) {
    throw InvalidSpec("stationary marginal is implemented for the energy-only sphere");
  }
  const int n = static_cast<int>(velocities.size());
  const int N = spec.n_particles;
  if (n < 1 || n >= N) throw std::invalid_argument("marginal order must satisfy 1 <= n < N");
  const double r2 = spec.radius2();
  double s = 0.0;
  for (const auto& v : velocities) s += v.squaredNorm();
  const double x = 1.0 - s / r2;
  if (!(x > 0.0)) return 0.0;
  const double log_f = log_sphere_area(3 * (N - n) - 1, 1.0) - log_sphere_area(3 * N - 1, 1.0) -
                       1.5 * n * std::log(r2) + 0.5 * (3.0 * (N - n) - 2.0) * std::log(x);
  return std::exp(log_f);
}

// ---------------------------------------------------------------------------

StationarySpeedCdf::StationarySpeedCdf(const ManifoldSpec& spec, int table_size) : spec_(spec) {
  spec_.validate();
  if (spec_.mode != Conservation::EnergyOnly || spec_.n_particles < 2) {
    throw InvalidSpec("speed distribution needs the energy-only sphere with N >= 2");
  }
  if (table_size < 16) throw std::invalid_argument("table_size must be at least 16");
  r_max_ = std::sqrt(spec_.radius2());
  const int N = spec_.n_particles;
  log_norm_ = std::log(4.0 * kPi) + log_sphere_area(3 * N - 4, 1.0) -
              log_sphere_area(3 * N - 1, 1.0) - 1.5 * std::log(spec_.radius2());
  power_ = 0.5 * (3.0 * N - 5.0);
  step_ = r_max_ / table_size;
  table_.assign(static_cast<std::size_t>(table_size) + 1, 0.0);
  auto density = [this](double r) { return radial_density(r); };
  for (int i = 0; i < table_size; ++i) {
    const double piece = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        density, i * step_, (i + 1) * step_, 8, 1e-12);
    table_[i + 1] = table_[i] + piece;
  }
}

double StationarySpeedCdf::radial_density(double r) const {
  const double x = 1.0 - r * r / spec_.radius2();
  if (!(x > 0.0)) return 0.0;
  return r * r * std::exp(log_norm_ + power_ * std::log(x));
}

double StationarySpeedCdf::operator()(double speed) const {
  if (!(speed > 0.0)) return 0.0;
  if (speed >= r_max_) return table_.back();
  const double x = speed / step_;
  const auto i = static_cast<std::size_t>(x);
  const double base = table_[i];
  const double a = i * step_;
  const auto piece = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
      [this](double r) { return radial_density(r); }, a, speed, 0, 1e-12);
  return base + piece;
}

// ---------------------------------------------------------------------------

double integrate_r3(const std::function<double(const Vec3&)>& f, const Vec3& center, double r_max,
                    int angular_order, double tol) {
  if (!(r_max > 0.0) || angular_order < 2) throw std::invalid_argument("invalid quadrature setup");
  // Gauss-Legendre nodes in cos(theta).
  std::vector<double> mu, wmu;
  for (double z : boost::math::legendre_p_zeros<double>(angular_order)) {
    const double dp = boost::math::legendre_p_prime(angular_order, z);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    mu.push_back(z);
    wmu.push_back(w);
    if (z != 0.0) {
      mu.push_back(-z);
      wmu.push_back(w);
    }
  }
  const int n_phi = 2 * angular_order;
  const double w_phi = 2.0 * kPi / n_phi;

  auto shell = [&](double r) {
    double s = 0.0;
    for (std::size_t a = 0; a < mu.size(); ++a) {
      const double st = std::sqrt(std::max(0.0, 1.0 - mu[a] * mu[a]));
      for (int b = 0; b < n_phi; ++b) {
        const double phi = (b + 0.5) * w_phi;
        const Vec3 dir(st * std::cos(phi), st * std::sin(phi), mu[a]);
        s += wmu[a] * w_phi * f(center + r * dir);
      }
    }
    return r * r * s;
  };
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(shell, 0.0, r_max, 8, tol);
}

// ---------------------------------------------------------------------------

double relative_entropy(const MarginalHistogram& f_hist, const LimitParams& p) {
  p.validate();
  if (f_hist.order != 1) throw std::invalid_argument("relative entropy needs a 1-marginal");
  if (f_hist.cells.empty()) throw std::invalid_argument("empty histogram");
  const auto& g = f_hist.grid;
  const double h = g.cell_width();
  const double scale = 1.0 / (std::sqrt(2.0) * p.sigma());
  auto axis_mass = [&](double lo, double mean) {
    return 0.5 * (std::erf((lo + h - mean) * scale) - std::erf((lo - mean) * scale));
  };
  double s = 0.0;
  for (const auto& [cell, prob] : f_hist.cells) {
    if (prob <= 0.0) continue;
    const Vec3 lo = g.cell_lower(cell);
    double mass = 1.0;
    for (int c = 0; c < 3; ++c) mass *= axis_mass(lo[c], p.u[c]);
    mass = std::max(mass, std::numeric_limits<double>::min());
    s -= prob * std::log(prob / mass);
  }
  return s;
}

VelocityGrid entropy_grid(const LimitParams& p, int bins) {
  p.validate();
  return VelocityGrid::centered(p.u, 5.0 * p.sigma(), bins);
}

// ---------------------------------------------------------------------------

MomentState fpe_moment_flow(const LimitParams& p, const Vec3& m0, const Mat3& M0, double t) {
  p.validate();
  if (!(t >= 0.0)) throw std::invalid_argument("time must be nonnegative");
  const double k = 1.5 / p.eps0;
  const Mat3 c0 = M0 - m0 * m0.transpose();
  const Mat3 c_inf = Mat3::Identity() / k;
  MomentState out;
  out.mean = p.u + (m0 - p.u) * std::exp(-k * t);
  const Mat3 c = c_inf + (c0 - c_inf) * std::exp(-2.0 * k * t);
  out.second = c + out.mean * out.mean.transpose();
  return out;
}

MomentState landau_moment_flow(const KernelSpec& kernel, const Vec3& m0, const Mat3& M0, double t) {
  landau_anisotropy_rate(kernel);
  if (!(t >= 0.0)) throw std::invalid_argument("time must be nonnegative");
  const Mat3 c0 = M0 - m0 * m0.transpose();
  const Mat3 iso = c0.trace() / 3.0 * Mat3::Identity();
  MomentState out;
  out.mean = m0;
  out.second = iso + (c0 - iso) * std::exp(-landau_anisotropy_rate(kernel) * t) +
               m0 * m0.transpose();
  return out;
}

double landau_anisotropy_rate(const KernelSpec& kernel) {
  kernel.validate();
  if (kernel.gamma != 0.0) {
    throw std::invalid_argument("second moments close only for gamma = 0");
  }
  return 12.0;
}

double pair_diffusion_anisotropy_rate(const KernelSpec& kernel, int n_particles) {
  if (n_particles < 2) throw std::invalid_argument("pair diffusion needs N >= 2");
  return landau_anisotropy_rate(kernel) * n_particles / (n_particles - 1.0);
}

// ---------------------------------------------------------------------------

std::vector<MarginalRate> finite_n_marginal_rates(const ManifoldSpec& spec) {
  spec.validate();
  const double eps0 = spec.eps0();
  const int n = spec.n_particles;
  const bool momentum = spec.mode == Conservation::EnergyMomentum;
  auto make = [&](std::string name, int j) {
    MarginalRate r;
    r.observable = std::move(name);
    r.degree = j;
    r.limit_rate = limit_eigenvalue(j, eps0);
    r.constant_radius_rate = j * (j + 3.0 * n) / (2.0 * n * eps0);
    r.stationary = momentum && j == 1;
    r.finite_rate = r.stationary ? 0.0 : eigenvalue_scaled(spec, j);
    return r;
  };
  return {make("P1_deg1(1)", 1), make("P1_deg2(1,2)", 2), make("P1_diff2(1,2)", 2),
          make("P1_deg3_xyz", 3), make("P1_deg3_cubic(1,2)", 3)};
}

}  // namespace kinlab
