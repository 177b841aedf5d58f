#include "kinlab/observables.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <regex>
#include <stdexcept>

#include "kinlab/parallel.hpp"

namespace kinlab {

void ObservableSeries::append(double time, std::span<const double> values) {
  const auto n = values.size();
  if (n == 0) throw std::invalid_argument("cannot reduce an empty ensemble");
  const double mean = pairwise_sum(values) / static_cast<double>(n);
  double se = 0.0;
  if (n > 1) {
    std::vector<double> dev(n);
    for (std::size_t i = 0; i < n; ++i) dev[i] = (values[i] - mean) * (values[i] - mean);
    se = std::sqrt(pairwise_sum(dev) / static_cast<double>(n - 1) / static_cast<double>(n));
  }
  times.push_back(time);
  means.push_back(mean);
  stderrs.push_back(se);
}

// ---------------------------------------------------------------------------

namespace {

using Eval = std::function<double(const ManifoldSpec&, const VelocityState&)>;

template <class P>
Eval sum_over_particles(P p) {
  return [p](const ManifoldSpec& spec, const VelocityState& v) {
    double s = 0.0;
    for (int k = 0; k < v.n_particles(); ++k) s += p(Vec3(v.particle(k) - spec.u));
    return s;
  };
}

int component(const std::string& s, const std::string& name) {
  const int c = std::stoi(s);
  if (c < 1 || c > 3) throw std::invalid_argument("component out of range in '" + name + "'");
  return c - 1;
}

}  // namespace

Observable parse_observable(const std::string& name) {
  static const std::regex pattern(R"(^\s*([A-Za-z_0-9]+)\s*(?:\(\s*(\d)\s*(?:,\s*(\d)\s*)?\))?\s*$)");
  std::smatch m;
  if (!std::regex_match(name, m, pattern)) {
    throw std::invalid_argument("malformed observable name '" + name + "'");
  }
  const std::string head = m[1];
  const int n_args = m[3].matched ? 2 : (m[2].matched ? 1 : 0);
  auto expect_args = [&](int k) {
    if (n_args != k) {
      throw std::invalid_argument("observable '" + head + "' takes " + std::to_string(k) +
                                  " component argument(s)");
    }
  };
  const int s = n_args >= 1 ? component(m[2], name) : 0;
  const int t = n_args >= 2 ? component(m[3], name) : 0;
  auto distinct = [&] {
    if (s == t) throw std::invalid_argument("observable '" + name + "' needs distinct components");
  };

  Observable obs;
  obs.name = name;
  if (head == "energy") {
    expect_args(0);
    obs.eval = [](const ManifoldSpec&, const VelocityState& v) {
      return v.energy() / v.n_particles();
    };
  } else if (head == "momentum") {
    expect_args(1);
    obs.eval = [s](const ManifoldSpec&, const VelocityState& v) {
      return v.momentum()[s] / v.n_particles();
    };
  } else if (head == "P1_deg1") {
    expect_args(1);
    obs.eval = sum_over_particles([s](const Vec3& w) { return w[s]; });
  } else if (head == "P1_deg2") {
    expect_args(2);
    distinct();
    obs.eval = sum_over_particles([s, t](const Vec3& w) { return w[s] * w[t]; });
  } else if (head == "P1_diff2") {
    expect_args(2);
    distinct();
    obs.eval = sum_over_particles([s, t](const Vec3& w) { return w[s] * w[s] - w[t] * w[t]; });
  } else if (head == "P1_axial2") {
    expect_args(0);
    obs.eval = sum_over_particles(
        [](const Vec3& w) { return w[0] * w[0] + w[1] * w[1] - 2.0 * w[2] * w[2]; });
  } else if (head == "P1_deg3_xyz") {
    expect_args(0);
    obs.eval = sum_over_particles([](const Vec3& w) { return w[0] * w[1] * w[2]; });
  } else if (head == "P1_deg3_cubic") {
    expect_args(2);
    distinct();
    obs.eval = sum_over_particles(
        [s, t](const Vec3& w) { return w[s] * w[s] * w[s] - 3.0 * w[s] * w[t] * w[t]; });
  } else if (head == "group_mean") {
    expect_args(1);
    obs.eval = [s](const ManifoldSpec& spec, const VelocityState& v) {
      const int tagged = (v.n_particles() + 1) / 2;
      double sum = 0.0;
      for (int k = 0; k < tagged; ++k) sum += v.particle(k)[s] - spec.u[s];
      return sum / tagged;
    };
  } else if (head == "anisotropy") {
    expect_args(1);
    obs.eval = [s](const ManifoldSpec& spec, const VelocityState& v) {
      double sum = 0.0;
      for (int k = 0; k < v.n_particles(); ++k) {
        const Vec3 w = v.particle(k) - spec.u;
        sum += w[s] * w[s] - w.squaredNorm() / 3.0;
      }
      return sum / v.n_particles();
    };
  } else {
    throw std::invalid_argument("unknown observable '" + name + "'");
  }
  return obs;
}

ObservableSeries moment_series(const ManifoldSpec& spec, std::span<const EnsembleSnapshot> run,
                               const Observable& observable) {
  ObservableSeries series;
  series.name = observable.name;
  std::vector<double> values;
  for (const auto& snap : run) {
    if (snap.states.empty()) throw std::invalid_argument("empty snapshot");
    series.n_replicas = static_cast<int>(snap.states.size());
    values.resize(snap.states.size());
    for (std::size_t r = 0; r < snap.states.size(); ++r) {
      values[r] = observable.eval(spec, snap.states[r]);
    }
    series.append(snap.time, values);
  }
  return series;
}

// ---------------------------------------------------------------------------

VelocityGrid VelocityGrid::centered(const Vec3& center, double half_width, int bins) {
  if (!(half_width > 0.0) || bins < 1) throw std::invalid_argument("invalid velocity grid");
  return VelocityGrid{center - Vec3::Constant(half_width), 2.0 * half_width, bins};
}

double VelocityGrid::cell_volume() const {
  const double h = cell_width();
  return h * h * h;
}

std::int64_t VelocityGrid::cell_count() const {
  return static_cast<std::int64_t>(bins) * bins * bins;
}

std::int64_t VelocityGrid::cell_index(const Vec3& v) const {
  std::int64_t idx = 0;
  for (int c = 0; c < 3; ++c) {
    const double x = (v[c] - lower[c]) / cell_width();
    if (!(x >= 0.0) || x >= bins) return -1;
    idx = idx * bins + static_cast<std::int64_t>(x);
  }
  return idx;
}

Vec3 VelocityGrid::cell_lower(std::int64_t index) const {
  Vec3 out;
  for (int c = 2; c >= 0; --c) {
    out[c] = lower[c] + static_cast<double>(index % bins) * cell_width();
    index /= bins;
  }
  return out;
}

bool VelocityGrid::operator==(const VelocityGrid& other) const {
  return lower == other.lower && width == other.width && bins == other.bins;
}

double MarginalHistogram::total() const {
  double s = 0.0;
  for (const auto& [idx, p] : cells) s += p;
  return s;
}

std::vector<double> MarginalHistogram::dense() const {
  if (order != 1) throw std::logic_error("dense() is only available for 1-marginals");
  std::vector<double> out(static_cast<std::size_t>(grid.cell_count()), 0.0);
  for (const auto& [idx, p] : cells) out[static_cast<std::size_t>(idx)] = p;
  return out;
}

MarginalHistogram marginal_histogram(const EnsembleSnapshot& snapshot, int order,
                                     const VelocityGrid& grid) {
  if (order != 1 && order != 2) throw std::invalid_argument("marginal order must be 1 or 2");
  if (snapshot.states.empty()) throw std::invalid_argument("empty snapshot");
  const std::int64_t stride = grid.cell_count();
  std::map<std::int64_t, std::uint64_t> counts;
  std::uint64_t inside = 0;
  std::uint64_t outside = 0;
  std::vector<std::int64_t> idx;
  for (const auto& state : snapshot.states) {
    const int n = state.n_particles();
    idx.resize(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) idx[k] = grid.cell_index(state.particle(k));
    if (order == 1) {
      for (int k = 0; k < n; ++k) {
        if (idx[k] < 0) {
          ++outside;
        } else {
          ++counts[idx[k]];
          ++inside;
        }
      }
    } else {
      if (n < 2) throw std::invalid_argument("2-marginal needs at least two particles");
      for (int k = 0; k < n; ++k) {
        for (int l = 0; l < n; ++l) {
          if (k == l) continue;
          if (idx[k] < 0 || idx[l] < 0) {
            ++outside;
          } else {
            ++counts[idx[k] * stride + idx[l]];
            ++inside;
          }
        }
      }
    }
  }
  if (inside == 0) throw std::invalid_argument("no samples fall inside the histogram grid");
  MarginalHistogram h;
  h.order = order;
  h.grid = grid;
  h.samples = inside + outside;
  h.outside_fraction = static_cast<double>(outside) / static_cast<double>(h.samples);
  h.cells.reserve(counts.size());
  for (const auto& [cell, c] : counts) {
    h.cells.emplace_back(cell, static_cast<double>(c) / static_cast<double>(inside));
  }
  return h;
}

double chaos_distance(const MarginalHistogram& h2, const MarginalHistogram& h1) {
  if (h2.order != 2 || h1.order != 1) {
    throw std::invalid_argument("chaos_distance expects a 2-marginal and a 1-marginal");
  }
  if (!(h2.grid == h1.grid)) throw std::invalid_argument("histogram grids do not match");
  const auto p1 = h1.dense();
  const std::int64_t stride = h1.grid.cell_count();
  // Cells absent from h2 contribute their product mass; the product sums to
  // one, so sum|h2 - p| = 1 + sum_{cells of h2} (|h2 - p| - p).
  double l1 = 1.0;
  for (const auto& [cell, p] : h2.cells) {
    const double prod = p1[static_cast<std::size_t>(cell / stride)] *
                        p1[static_cast<std::size_t>(cell % stride)];
    l1 += std::abs(p - prod) - prod;
  }
  return std::max(l1, 0.0);
}

// ---------------------------------------------------------------------------

DecayFit decay_rate_fit(const ObservableSeries& series, const FitOptions& options) {
  std::vector<double> t, y, sigma;
  double sign = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double ti = series.times[i];
    if (options.t_min && ti < *options.t_min) continue;
    if (options.t_max && ti > *options.t_max) continue;
    const double m = series.means[i] - options.offset;
    const double se = series.stderrs[i];
    if (!(std::abs(m) > options.trim_sigma * se) || m == 0.0) continue;
    const double s = m > 0.0 ? 1.0 : -1.0;
    if (sign == 0.0) sign = s;
    if (s != sign) throw std::invalid_argument("series changes sign inside the fit window");
    t.push_back(ti);
    y.push_back(std::log(std::abs(m)));
    sigma.push_back(se / std::abs(m));
  }
  const auto n = t.size();
  if (n < 2) throw std::invalid_argument("fewer than two usable points in the fit window");

  const bool weighted = std::any_of(sigma.begin(), sigma.end(), [](double s) { return s > 0.0; });
  std::vector<double> w(n, 1.0);
  if (weighted) {
    double floor_s = 0.0;
    for (double s : sigma) floor_s = std::max(floor_s, s);
    floor_s *= 1e-12;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = std::max(sigma[i], floor_s);
      w[i] = 1.0 / (s * s);
    }
  }
  double sw = 0, st = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sw += w[i];
    st += w[i] * t[i];
    sy += w[i] * y[i];
  }
  const double tbar = st / sw;
  const double ybar = sy / sw;
  double stt = 0, sty = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    stt += w[i] * (t[i] - tbar) * (t[i] - tbar);
    sty += w[i] * (t[i] - tbar) * (y[i] - ybar);
    syy += w[i] * (y[i] - ybar) * (y[i] - ybar);
  }
  if (!(stt > 0.0)) throw std::invalid_argument("fit window has a single distinct time");
  const double slope = sty / stt;
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - ybar - slope * (t[i] - tbar);
    rss += w[i] * r * r;
  }

  DecayFit fit;
  fit.rate = -slope;
  fit.n_points = static_cast<int>(n);
  fit.r_squared = syy > 0.0 ? 1.0 - rss / syy : 1.0;
  if (weighted) {
    // Absolute weights: slope variance 1/stt, inflated when the residuals
    // exceed their nominal scatter.
    const double chi2 = n > 2 ? rss / static_cast<double>(n - 2) : 1.0;
    fit.rate_stderr = std::sqrt(std::max(1.0, chi2) / stt);
  } else {
    fit.rate_stderr = n > 2 ? std::sqrt(rss / static_cast<double>(n - 2) / stt) : 0.0;
  }
  fit.ci_low = fit.rate - 1.96 * fit.rate_stderr;
  fit.ci_high = fit.rate + 1.96 * fit.rate_stderr;
  fit.non_exponential = fit.r_squared < 0.9;
  return fit;
}

// ---------------------------------------------------------------------------

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw std::invalid_argument("KS statistic of an empty sample");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double ks_critical_value(std::size_t n, double alpha) {
  if (n == 0 || !(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("invalid KS level");
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  const double sn = std::sqrt(static_cast<double>(n));
  return c / (sn + 0.12 + 0.11 / sn);
}

}  // namespace kinlab
