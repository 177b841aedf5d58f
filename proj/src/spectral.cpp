#include "kinlab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "kinlab/parallel.hpp"

namespace kinlab {

std::int64_t eigenvalue_unscaled(const ManifoldSpec& spec, int j) {
  spec.validate();
  if (j < 0) throw std::invalid_argument("degree j must be nonnegative");
  const std::int64_t shift = spec.mode == Conservation::EnergyOnly ? 2 : 5;
  return static_cast<std::int64_t>(j) * (j + 3LL * spec.n_particles - shift);
}

double eigenvalue_scaled(const ManifoldSpec& spec, int j) {
  return static_cast<double>(eigenvalue_unscaled(spec, j)) / spec.radius2();
}

double limit_eigenvalue(int j, double eps_eff) {
  if (j < 0) throw std::invalid_argument("degree j must be nonnegative");
  if (!(eps_eff > 0.0)) throw std::invalid_argument("eps_eff must be positive");
  return 1.5 * j / eps_eff;
}

SpectrumTable spectrum_table(const ManifoldSpec& spec, int j_max) {
  spec.validate();
  if (j_max < 0) throw std::invalid_argument("j_max must be nonnegative");
  SpectrumTable t;
  t.mode = spec.mode;
  t.n_particles = spec.n_particles;
  t.eps_eff = spec.eps0();
  for (int j = 0; j <= j_max; ++j) {
    t.entries.push_back(
        {j, eigenvalue_unscaled(spec, j), eigenvalue_scaled(spec, j), limit_eigenvalue(j, t.eps_eff)});
  }
  return t;
}

// ---------------------------------------------------------------------------

namespace {

void check_components(const HarmonicSpec& h, bool need_pair) {
  auto ok = [](int c) { return c >= 0 && c <= 2; };
  if (!ok(h.sigma) || (need_pair && (!ok(h.tau) || h.tau == h.sigma))) {
    throw std::invalid_argument("invalid component indices for " + h.name());
  }
}

}  // namespace

int HarmonicSpec::degree() const {
  switch (family) {
    case HarmonicFamily::Deg1:
      return 1;
    case HarmonicFamily::Deg2Mixed:
    case HarmonicFamily::Deg2Diff:
    case HarmonicFamily::Deg2Axial:
      return 2;
    case HarmonicFamily::Deg3Xyz:
    case HarmonicFamily::Deg3Cubic:
      return 3;
  }
  return 0;
}

double HarmonicSpec::eval(const Vec3& w) const {
  const int s = sigma;
  const int t = tau;
  switch (family) {
    case HarmonicFamily::Deg1:
      check_components(*this, false);
      return w[s];
    case HarmonicFamily::Deg2Mixed:
      check_components(*this, true);
      return w[s] * w[t];
    case HarmonicFamily::Deg2Diff:
      check_components(*this, true);
      return w[s] * w[s] - w[t] * w[t];
    case HarmonicFamily::Deg2Axial:
      return w[0] * w[0] + w[1] * w[1] - 2.0 * w[2] * w[2];
    case HarmonicFamily::Deg3Xyz:
      return w[0] * w[1] * w[2];
    case HarmonicFamily::Deg3Cubic:
      check_components(*this, true);
      return w[s] * w[s] * w[s] - 3.0 * w[s] * w[t] * w[t];
  }
  return 0.0;
}

std::string HarmonicSpec::name() const {
  const std::string s = std::to_string(sigma + 1);
  const std::string t = std::to_string(tau + 1);
  switch (family) {
    case HarmonicFamily::Deg1:
      return "P1_deg1(" + s + ")";
    case HarmonicFamily::Deg2Mixed:
      return "P1_deg2(" + s + "," + t + ")";
    case HarmonicFamily::Deg2Diff:
      return "P1_diff2(" + s + "," + t + ")";
    case HarmonicFamily::Deg2Axial:
      return "P1_axial2";
    case HarmonicFamily::Deg3Xyz:
      return "P1_deg3_xyz";
    case HarmonicFamily::Deg3Cubic:
      return "P1_deg3_cubic(" + s + "," + t + ")";
  }
  return "?";
}

EigenfunctionValue symmetric_eigenfunction(const ManifoldSpec& spec, const VelocityState& v,
                                           const HarmonicSpec& p) {
  if (v.n_particles() != spec.n_particles) throw std::invalid_argument("state/spec size mismatch");
  EigenfunctionValue out;
  out.degree = p.degree();
  out.constant_on_manifold =
      p.family == HarmonicFamily::Deg1 && spec.mode == Conservation::EnergyMomentum;
  for (int k = 0; k < v.n_particles(); ++k) out.value += p.eval(Vec3(v.particle(k) - spec.u));
  return out;
}

// ---------------------------------------------------------------------------

TrialFunction TrialFunction::standard(int n) {
  if (n < 2) throw InvalidSpec("trial function needs N >= 2");
  TrialFunction tf;
  tf.n_particles = n;
  tf.c_const = n / 3.0;
  tf.a_const = 1.5 / n * std::sqrt(3.0 * n - 1.0);
  tf.a_surface = tf.a_const * std::exp(-0.5 * log_sphere_area(3 * n - 4, std::sqrt(2.0 * n)));
  return tf;
}

namespace {

void require_standard(const TrialFunction& tf, const ManifoldSpec& spec) {
  if (spec.mode != Conservation::EnergyMomentum || spec.n_particles != tf.n_particles ||
      spec.eps != 1.0 || !spec.u.isZero(0.0)) {
    throw InvalidSpec("trial function is defined on the standard manifold (C=4, u=0, eps=1)");
  }
}

}  // namespace

double trial_eval(const TrialFunction& tf, const ManifoldSpec& spec, const VelocityState& v) {
  require_standard(tf, spec);
  double s = 0.0;
  for (int k = 0; k < v.n_particles(); ++k) s += 0.5 * v.particle(k)[0] * v.particle(k)[0];
  return tf.a_const * (s - tf.c_const);
}

MonteCarloEstimate dirichlet_form_mc(const ManifoldSpec& spec, const KernelSpec& kernel,
                                     const PairGradient& gradient, std::size_t n_samples,
                                     std::uint64_t seed, unsigned threads) {
  spec.validate();
  kernel.validate();
  if (spec.n_particles < 2) throw InvalidSpec("quadratic form needs N >= 2");
  if (n_samples < 1000) throw std::invalid_argument("at least 1000 samples are required");
  constexpr std::size_t kChunk = 4096;
  const std::size_t n_chunks = (n_samples + kChunk - 1) / kChunk;
  std::vector<double> sums(n_chunks), squares(n_chunks);
  const double half_n = 0.5 * spec.n_particles;

  parallel_for(n_chunks, threads, [&](std::size_t c) {
    RandomStream rng = derive_stream(seed, c);
    const std::size_t begin = c * kChunk;
    const std::size_t end = std::min(n_samples, begin + kChunk);
    double s = 0.0, q = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const VelocityState v = sample_uniform(spec, rng);
      const Vec3 d = v.particle(1) - v.particle(0);
      const double beta = d.norm();
      double value = 0.0;
      if (beta > 0.0) {
        const auto [g1, g2] = gradient(v);
        const Vec3 g = perp_projector(d) * (g2 - g1);
        value = half_n * kernel.weight(beta) * g.squaredNorm();
      }
      s += value;
      q += value * value;
    }
    sums[c] = s;
    squares[c] = q;
  });

  const double n = static_cast<double>(n_samples);
  const double mean = pairwise_sum(sums) / n;
  const double var = std::max(0.0, pairwise_sum(squares) / n - mean * mean) * n / (n - 1.0);
  return {mean, std::sqrt(var / n), n_samples};
}

MonteCarloEstimate rayleigh_quotient_mc(const TrialFunction& tf, const KernelSpec& kernel,
                                        std::size_t n_samples, std::uint64_t seed,
                                        unsigned threads) {
  const ManifoldSpec spec = ManifoldSpec::standard(tf.n_particles);
  const double a = tf.a_const;
  // grad_i psi = A v_{i,1} e_1; the trial function has unit norm, so the
  // quadratic form is the quotient.
  PairGradient grad = [a](const VelocityState& v) {
    return std::pair<Vec3, Vec3>(Vec3(a * v.particle(0)[0], 0.0, 0.0),
                                 Vec3(a * v.particle(1)[0], 0.0, 0.0));
  };
  return dirichlet_form_mc(spec, kernel, grad, n_samples, seed, threads);
}

double lambda1_bound(int n) {
  if (n < 2) throw std::invalid_argument("bound needs N >= 2");
  return 9.0 / (5.0 * std::sqrt(std::numbers::pi)) / std::sqrt(3.0 * n - 4.0);
}

GapScanResult gap_scan(std::span<const int> n_list, const KernelSpec& kernel, std::size_t n_samples,
                       std::uint64_t seed, unsigned threads) {
  if (n_list.size() < 3) throw std::invalid_argument("gap scan needs at least three N values");
  for (std::size_t i = 1; i < n_list.size(); ++i) {
    if (n_list[i] <= n_list[i - 1]) throw std::invalid_argument("N list must be ascending");
  }
  GapScanResult out;
  for (int n : n_list) {
    const auto est = rayleigh_quotient_mc(TrialFunction::standard(n), kernel, n_samples,
                                          mix64(seed ^ static_cast<std::uint64_t>(n)), threads);
    if (!(est.estimate > 0.0)) throw std::runtime_error("nonpositive Rayleigh estimate");
    out.rows.push_back({n, est.estimate, est.std_error, lambda1_bound(n)});
  }

  // Weighted least squares for log(estimate) = c + p log N.
  const std::size_t m = out.rows.size();
  std::vector<double> x(m), y(m), w(m, 1.0);
  bool weighted = true;
  for (std::size_t i = 0; i < m; ++i) {
    x[i] = std::log(out.rows[i].n_particles);
    y[i] = std::log(out.rows[i].estimate);
    const double s = out.rows[i].std_error / out.rows[i].estimate;
    if (s > 0.0) {
      w[i] = 1.0 / (s * s);
    } else {
      weighted = false;
    }
  }
  if (!weighted) std::fill(w.begin(), w.end(), 1.0);
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
  }
  const double xb = sx / sw, yb = sy / sw;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += w[i] * (x[i] - xb) * (x[i] - xb);
    sxy += w[i] * (x[i] - xb) * (y[i] - yb);
  }
  out.exponent = sxy / sxx;
  double rss = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = y[i] - yb - out.exponent * (x[i] - xb);
    rss += w[i] * r * r;
  }
  const double chi2 = rss / static_cast<double>(m - 2);
  out.exponent_stderr =
      weighted ? std::sqrt(std::max(1.0, chi2) / sxx) : std::sqrt(chi2 / sxx);
  return out;
}

}  // namespace kinlab
