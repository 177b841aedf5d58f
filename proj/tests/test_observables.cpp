#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "kinlab/observables.hpp"
#include "test_util.hpp"

using namespace kinlab;
using kinlab::testing::random_state;

namespace {

ObservableSeries exponential_series(double rate, double amplitude, int n, double dt, double rel_se = 0.0) {
  ObservableSeries s;
  s.name = "synthetic";
  for (int i = 0; i < n; ++i) {
    const double t = i * dt;
    s.times.push_back(t);
    s.means.push_back(amplitude * std::exp(-rate * t));
    s.stderrs.push_back(rel_se * std::abs(amplitude) * std::exp(-rate * t));
  }
  return s;
}

VelocityState state_of(std::initializer_list<Vec3> vs) {
  VecX x(3 * static_cast<int>(vs.size()));
  int k = 0;
  for (const auto& v : vs) x.segment<3>(3 * k++) = v;
  return VelocityState(x);
}

}  // namespace

TEST(ObservableSeries, AppendComputesMeanAndStandardError) {
  ObservableSeries s;
  const std::vector<double> a = {1.0, 2.0, 3.0, 4.0};
  s.append(0.5, a);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(s.means[0], 2.5);
  // Sample variance 5/3, stderr sqrt(5/12).
  EXPECT_NEAR(s.stderrs[0], std::sqrt(5.0 / 12.0), 1e-15);
  const std::vector<double> one = {7.0};
  s.append(1.0, one);
  EXPECT_EQ(s.stderrs[1], 0.0);
  EXPECT_THROW(s.append(2.0, std::vector<double>{}), std::invalid_argument);
}

TEST(ObservableCatalog, EvaluatesDefinitions) {
  const auto spec = ManifoldSpec::energy_momentum(3, Vec3(1.0, 0.0, 0.0), 4.0);
  const auto v = state_of({Vec3(2, 1, 0), Vec3(1, -1, 2), Vec3(0, 0, -2)});
  // w = v - u: (1,1,0), (0,-1,2), (-1,0,-2)
  EXPECT_DOUBLE_EQ(parse_observable("energy").eval(spec, v), (5.0 + 6.0 + 4.0) / 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(parse_observable("momentum(1)").eval(spec, v), 1.0);
  EXPECT_DOUBLE_EQ(parse_observable("P1_deg1(2)").eval(spec, v), 0.0);
  EXPECT_DOUBLE_EQ(parse_observable("P1_deg2(1,2)").eval(spec, v), 1.0);
  EXPECT_DOUBLE_EQ(parse_observable("P1_diff2(1,3)").eval(spec, v), (1.0 + 0.0 + 1.0) - (0.0 + 4.0 + 4.0));
  EXPECT_DOUBLE_EQ(parse_observable("P1_axial2").eval(spec, v), 2.0 + (1.0 - 8.0) + (1.0 - 8.0));
  EXPECT_DOUBLE_EQ(parse_observable("P1_deg3_xyz").eval(spec, v), 0.0);
  EXPECT_DOUBLE_EQ(parse_observable("P1_deg3_cubic(1,2)").eval(spec, v), (1.0 - 3.0) + 0.0 + (-1.0));
  EXPECT_DOUBLE_EQ(parse_observable("group_mean(1)").eval(spec, v), 0.5);
  EXPECT_DOUBLE_EQ(parse_observable("anisotropy(3)").eval(spec, v),
                   ((0.0 - 2.0 / 3.0) + (4.0 - 5.0 / 3.0) + (4.0 - 5.0 / 3.0)) / 3.0);
  EXPECT_EQ(parse_observable(" P1_deg2( 1 , 3 ) ").name, " P1_deg2( 1 , 3 ) ");
}

TEST(ObservableCatalog, RejectsBadNames) {
  for (const char* bad : {"nonsense", "P1_deg2(1,1)", "P1_deg1(4)", "P1_deg1", "energy(1)", "P1_deg2(1,",
                          "momentum(0)", ""}) {
    EXPECT_THROW(parse_observable(bad), std::invalid_argument) << bad;
  }
}

TEST(MomentSeries, EvaluatesEverySnapshot) {
  const auto spec = ManifoldSpec::energy_only(4, 1.0);
  std::vector<EnsembleSnapshot> run(3);
  for (int i = 0; i < 3; ++i) {
    run[i].time = 0.1 * i;
    for (int r = 0; r < 5; ++r) run[i].states.push_back(random_state(spec, 10 * i + r));
  }
  const auto s = moment_series(spec, run, parse_observable("energy"));
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.n_replicas, 5);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(s.means[i], 1.0, 1e-12);
    EXPECT_LT(s.stderrs[i], 1e-12);
    EXPECT_DOUBLE_EQ(s.times[i], 0.1 * i);
  }
}

TEST(VelocityGrid, IndexingRoundTrip) {
  const auto g = VelocityGrid::centered(Vec3(1, 0, -1), 2.0, 4);
  EXPECT_EQ(g.cell_count(), 64);
  EXPECT_DOUBLE_EQ(g.cell_volume(), 1.0);
  for (std::int64_t c = 0; c < g.cell_count(); ++c) {
    const Vec3 mid = g.cell_lower(c) + Vec3::Constant(0.5);
    EXPECT_EQ(g.cell_index(mid), c);
  }
  EXPECT_EQ(g.cell_index(Vec3(3.0, 0, -1)), -1);
  EXPECT_EQ(g.cell_index(Vec3(-1.0, 0, -1)), 0 * 16 + 2 * 4 + 2);
  EXPECT_THROW(VelocityGrid::centered(Vec3::Zero(), 0.0, 4), std::invalid_argument);
}

TEST(MarginalHistogram, NormalizationAndPermutationInvariance) {
  const auto spec = ManifoldSpec::energy_only(6, 1.0);
  EnsembleSnapshot snap, permuted;
  for (int r = 0; r < 40; ++r) {
    const auto v = random_state(spec, r);
    snap.states.push_back(v);
    VecX x(18);
    for (int k = 0; k < 6; ++k) x.segment<3>(3 * k) = v.particle((k + 2 + r) % 6);
    permuted.states.push_back(VelocityState(x));
  }
  const auto grid = VelocityGrid::centered(Vec3::Zero(), 1.5, 5);
  for (int order : {1, 2}) {
    const auto a = marginal_histogram(snap, order, grid);
    const auto b = marginal_histogram(permuted, order, grid);
    EXPECT_NEAR(a.total(), 1.0, 1e-12);
    EXPECT_EQ(a.samples, order == 1 ? 240u : 40u * 30u);
    ASSERT_EQ(a.cells.size(), b.cells.size());
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
      EXPECT_EQ(a.cells[i].first, b.cells[i].first);
      EXPECT_DOUBLE_EQ(a.cells[i].second, b.cells[i].second);
    }
    EXPECT_TRUE(std::is_sorted(a.cells.begin(), a.cells.end()));
  }
  EXPECT_THROW(marginal_histogram(snap, 3, grid), std::invalid_argument);
  EXPECT_THROW(marginal_histogram(EnsembleSnapshot{}, 1, grid), std::invalid_argument);
}

TEST(MarginalHistogram, OutsideFraction) {
  EnsembleSnapshot snap;
  snap.states.push_back(state_of({Vec3(0.1, 0.1, 0.1), Vec3(5, 0, 0)}));
  const auto grid = VelocityGrid::centered(Vec3::Zero(), 1.0, 2);
  const auto h1 = marginal_histogram(snap, 1, grid);
  EXPECT_DOUBLE_EQ(h1.outside_fraction, 0.5);
  EXPECT_DOUBLE_EQ(h1.total(), 1.0);
  EXPECT_THROW(marginal_histogram(snap, 2, grid), std::invalid_argument);
}

TEST(ChaosDistance, ProductIsZeroAndHandExample) {
  const auto grid = VelocityGrid::centered(Vec3::Zero(), 1.0, 2);
  MarginalHistogram h1{1, grid, {{0, 0.25}, {3, 0.75}}, 4, 0.0};
  MarginalHistogram prod{2, grid, {}, 16, 0.0};
  for (auto [a, pa] : h1.cells)
    for (auto [b, pb] : h1.cells) prod.cells.emplace_back(a * 8 + b, pa * pb);
  std::sort(prod.cells.begin(), prod.cells.end());
  EXPECT_NEAR(chaos_distance(prod, h1), 0.0, 1e-15);

  // Two particles always in distinct cells a and b: |0.5-0.25| twice plus 0.25 twice.
  EnsembleSnapshot snap;
  snap.states.push_back(state_of({Vec3(-0.5, -0.5, -0.5), Vec3(0.5, 0.5, 0.5)}));
  const auto s1 = marginal_histogram(snap, 1, grid);
  const auto s2 = marginal_histogram(snap, 2, grid);
  EXPECT_NEAR(chaos_distance(s2, s1), 1.0, 1e-15);

  EXPECT_THROW(chaos_distance(h1, h1), std::invalid_argument);
  const auto other = VelocityGrid::centered(Vec3::Zero(), 2.0, 2);
  MarginalHistogram h1_other = h1;
  h1_other.grid = other;
  EXPECT_THROW(chaos_distance(prod, h1_other), std::invalid_argument);
}

TEST(DecayFit, ExactExponential) {
  const auto s = exponential_series(2.0, 3.0, 50, 0.05);
  const auto fit = decay_rate_fit(s);
  EXPECT_NEAR(fit.rate, 2.0, 1e-12);
  EXPECT_NEAR(fit.r_squared, 1.0, 1e-12);
  EXPECT_EQ(fit.n_points, 50);
  EXPECT_TRUE(fit.contains(2.0));
  EXPECT_FALSE(fit.non_exponential);
}

TEST(DecayFit, NegativeAmplitudeWindowAndOffset) {
  auto s = exponential_series(0.7, -2.0, 40, 0.1);
  for (auto& m : s.means) m += 5.0;
  FitOptions opt;
  opt.offset = 5.0;
  opt.t_min = 1.0;
  opt.t_max = 3.0;
  const auto fit = decay_rate_fit(s, opt);
  EXPECT_NEAR(fit.rate, 0.7, 1e-10);
  EXPECT_EQ(fit.n_points, 21);
}

TEST(DecayFit, ScaleInvariance) {
  auto s = exponential_series(1.3, 1.0, 30, 0.1, 0.02);
  RandomStream rng(8);
  for (auto& m : s.means) m *= 1.0 + 0.02 * rng.normal();
  auto scaled = s;
  for (auto& m : scaled.means) m *= 1024.0;
  for (auto& e : scaled.stderrs) e *= 1024.0;
  const auto a = decay_rate_fit(s);
  const auto b = decay_rate_fit(scaled);
  EXPECT_NEAR(a.rate, b.rate, 1e-12);
  EXPECT_NEAR(a.rate_stderr, b.rate_stderr, 1e-12);
  EXPECT_TRUE(a.contains(1.3)) << a.rate << " +- " << a.rate_stderr;
}

TEST(DecayFit, NoisyDataCoverage) {
  // With correctly specified errors, the 95% interval should cover the truth
  // in most of 200 independent trials.
  int covered = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto s = exponential_series(1.0, 1.0, 20, 0.1, 0.01);
    RandomStream rng(1000 + trial);
    for (std::size_t i = 0; i < s.size(); ++i) s.means[i] += s.stderrs[i] * rng.normal();
    if (decay_rate_fit(s).contains(1.0)) ++covered;
  }
  EXPECT_GE(covered, 175);
}

TEST(DecayFit, DegenerateInputs) {
  ObservableSeries constant;
  for (int i = 0; i < 10; ++i) {
    constant.times.push_back(i);
    constant.means.push_back(2.0);
    constant.stderrs.push_back(0.0);
  }
  const auto flat = decay_rate_fit(constant);
  EXPECT_NEAR(flat.rate, 0.0, 1e-14);

  ObservableSeries sign = constant;
  sign.means[5] = -2.0;
  EXPECT_THROW(decay_rate_fit(sign), std::invalid_argument);

  auto noise = exponential_series(1.0, 1.0, 10, 0.1, 1.0);
  EXPECT_THROW(decay_rate_fit(noise), std::invalid_argument);

  // A non-exponential shape is flagged.
  ObservableSeries bump;
  for (int i = 0; i < 40; ++i) {
    const double t = 0.1 * i;
    bump.times.push_back(t);
    bump.means.push_back(1.0 + std::sin(3.0 * t) * 0.9);
    bump.stderrs.push_back(0.0);
  }
  EXPECT_TRUE(decay_rate_fit(bump).non_exponential);
}

TEST(KolmogorovSmirnov, StatisticAndCriticalValue) {
  const std::vector<double> grid = {0.1, 0.3, 0.5, 0.7, 0.9};
  EXPECT_NEAR(ks_statistic(grid, [](double x) { return x; }), 0.1, 1e-15);
  EXPECT_NEAR(ks_statistic({0.5}, [](double x) { return x; }), 0.5, 1e-15);
  EXPECT_NEAR(ks_critical_value(1000000, 0.01), 1.62762 / 1000.0, 1e-6);
  EXPECT_GT(ks_critical_value(10, 0.01), ks_critical_value(100, 0.01));

  RandomStream rng(21);
  std::vector<double> u(20000);
  for (auto& x : u) x = rng.uniform();
  EXPECT_LT(ks_statistic(u, [](double x) { return x; }), ks_critical_value(u.size(), 0.001));
  std::vector<double> sq(u);
  for (auto& x : sq) x *= x;
  EXPECT_GT(ks_statistic(sq, [](double x) { return x; }), ks_critical_value(sq.size(), 0.01));
  EXPECT_THROW(ks_statistic({}, [](double x) { return x; }), std::invalid_argument);
  EXPECT_THROW(ks_critical_value(0), std::invalid_argument);
}
