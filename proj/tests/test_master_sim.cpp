#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "kinlab/master_sim.hpp"
#include "kinlab/observables.hpp"
#include "test_util.hpp"

using namespace kinlab;
using kinlab::testing::mean_and_error;
using kinlab::testing::random_state;
using kinlab::testing::random_vector;

namespace {

// Laplacian of phi on the pair sphere B^2_kl, by central differences along
// two great circles of the unit direction n. B^2_kl is a 2-sphere of radius
// beta / sqrt(2) in R^6, hence the factor 2 / beta^2.
double pair_laplacian_fd(const VelocityState& v, int k, int l, const TestPolynomial& phi) {
  const Vec3 alpha = v.particle(k) + v.particle(l);
  const Vec3 d = v.particle(k) - v.particle(l);
  const double beta = d.norm();
  const Vec3 n = d / beta;
  Vec3 t1 = n.unitOrthogonal();
  Vec3 t2 = n.cross(t1);
  auto f = [&](const Vec3& m) {
    VelocityState w = v;
    w.particle(k) = 0.5 * (alpha + beta * m);
    w.particle(l) = 0.5 * (alpha - beta * m);
    return phi.value(w);
  };
  const double h = 1e-3;
  double lap = 0.0;
  for (const Vec3& t : {t1, t2}) {
    lap += (f(std::cos(h) * n + std::sin(h) * t) - 2.0 * f(n) + f(std::cos(h) * n - std::sin(h) * t)) /
           (h * h);
  }
  return 2.0 / (beta * beta) * lap;
}

double generator_fd(const VelocityState& v, const KernelSpec& kernel, const TestPolynomial& phi) {
  const int n = v.n_particles();
  double s = 0.0;
  for (int k = 0; k < n; ++k)
    for (int l = k + 1; l < n; ++l) {
      const double beta = (v.particle(k) - v.particle(l)).norm();
      s += 2.0 * kernel.weight(beta) * pair_laplacian_fd(v, k, l, phi);
    }
  return s / (n - 1);
}

double manifold_laplacian_fd(const ManifoldSpec& spec, const VelocityState& v,
                             const TestPolynomial& phi) {
  return kinlab::testing::manifold_laplacian_fd(
      spec, v, [&](const VelocityState& x) { return phi.value(x); });
}

VelocityState permute(const VelocityState& v, const std::vector<int>& perm) {
  VelocityState out = v;
  for (std::size_t k = 0; k < perm.size(); ++k) out.particle(perm[k]) = v.particle(static_cast<int>(k));
  return out;
}

}  // namespace

TEST(KernelSpec, ValidationAndCappedWeight) {
  EXPECT_THROW((KernelSpec{-5.0, 1e-8}.validate()), std::invalid_argument);
  EXPECT_THROW((KernelSpec{-3.0, 0.0}.validate()), std::invalid_argument);
  const KernelSpec coulomb{-3.0, 1e-3};
  EXPECT_DOUBLE_EQ(coulomb.weight(2.0), 0.5);
  EXPECT_DOUBLE_EQ(coulomb.weight(1e-6), 1e3);
  const KernelSpec maxwell{0.0, 1e-3};
  EXPECT_DOUBLE_EQ(maxwell.weight(3.0), 9.0);
  EXPECT_DOUBLE_EQ(maxwell.weight(1e-6), 1e-12);
}

TEST(SimConfig, ValidationListsProblems) {
  SimConfig c;
  c.dt = 0.0;
  c.n_replicas = 0;
  try {
    c.validate();
    FAIL();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("dt"), std::string::npos);
    EXPECT_NE(msg.find("n_replicas"), std::string::npos);
  }
}

TEST(Steps, ZeroTimeStepIsIdentity) {
  const auto spec = ManifoldSpec::energy_momentum(5, Vec3(0.2, 0, 0), 1.0);
  const auto v = random_state(spec, 1);
  RandomStream rng(3);
  EXPECT_EQ(step_sphere_diffusion(spec, v, 0.0, rng).flat(), v.flat());
  EXPECT_EQ(step_pair_diffusion(spec, v, KernelSpec{}, 0.0, rng).flat(), v.flat());
}

TEST(Steps, ConservationHoldsEveryStep) {
  for (auto spec : {ManifoldSpec::energy_only(6, 1.0), ManifoldSpec::energy_momentum(6, Vec3(0.3, -0.2, 0.1), 1.2)}) {
    auto a = random_state(spec, 2);
    auto b = a;
    RandomStream rng(5);
    for (int s = 0; s < 200; ++s) {
      a = step_sphere_diffusion(spec, a, 1e-2, rng);
      b = step_pair_diffusion(spec, b, KernelSpec{-3.0, 1e-8}, 1e-2, rng);
      ASSERT_TRUE(is_feasible(spec, a, 1e-12));
      ASSERT_TRUE(is_feasible(spec, b, 1e-12));
    }
  }
}

TEST(PairUpdate, RestoresPairInvariantsExactly) {
  const auto spec = ManifoldSpec::energy_momentum(4, Vec3::Zero(), 1.0);
  auto v = random_state(spec, 3);
  const auto before = pair_frame(v, 1, 2);
  ASSERT_TRUE(pair_update(v, 1, 2, KernelSpec{-3.0, 1e-8}, 0.01, Vec3(0.3, -1.2, 0.7), Vec3(-0.5, 0.1, 2.0)));
  const auto after = pair_frame(v, 1, 2);
  EXPECT_LE((after.alpha - before.alpha).norm(), 1e-14);
  EXPECT_NEAR(after.beta, before.beta, 1e-14);
  EXPECT_GT((after.n - before.n).norm(), 1e-3);
}

TEST(PairUpdate, SkipsPairsBelowCutoff) {
  VecX x(9);
  x << 1, 0, 0, 1, 0, 0, -2, 0, 0;
  VelocityState v(x);
  EXPECT_FALSE(pair_update(v, 0, 1, KernelSpec{-3.0, 1e-8}, 0.1, Vec3::Ones(), -Vec3::Ones()));
  EXPECT_EQ(v.flat(), x);
}

TEST(TestPolynomial, GradientMatchesFiniteDifferences) {
  const auto spec = ManifoldSpec::energy_only(3, 1.0);
  const auto v = random_state(spec, 4);
  for (const auto& phi : {TestPolynomial::product(3, 0, 0, 1, 1), TestPolynomial::product(3, 2, 1, 2, 1),
                          TestPolynomial::energy(3), TestPolynomial::coordinate(3, 1, 2)}) {
    const VecX g = phi.gradient(v);
    for (int i = 0; i < 9; ++i) {
      VecX xp = v.flat(), xm = v.flat();
      xp[i] += 1e-6;
      xm[i] -= 1e-6;
      EXPECT_NEAR(g[i], (phi.value(VelocityState(xp)) - phi.value(VelocityState(xm))) / 2e-6, 1e-8)
          << phi.name();
    }
  }
  EXPECT_EQ(TestPolynomial::product(3, 0, 0, 1, 1).name(), "v11*v22");
}

TEST(Generator, ConservedQuantitiesGiveZero) {
  const auto spec = ManifoldSpec::energy_momentum(5, Vec3(0.1, 0.2, 0), 1.0);
  for (double gamma : {-3.0, -2.0, 0.0, 3.0}) {
    const KernelSpec k{gamma, 1e-8};
    for (int i = 0; i < 20; ++i) {
      const auto v = random_state(spec, 40 + i);
      EXPECT_EQ(generator_apply(v, k, TestPolynomial::mass(5)), 0.0);
      EXPECT_LE(std::abs(generator_apply(v, k, TestPolynomial::energy(5))), 1e-12);
      for (int s = 0; s < 3; ++s) EXPECT_EQ(generator_apply(v, k, TestPolynomial::momentum(5, s)), 0.0);
    }
  }
}

TEST(Generator, TwoParticleCoulombClosedForm) {
  const auto spec = ManifoldSpec::energy_momentum(2, Vec3::Zero(), 1.0);
  for (int i = 0; i < 10; ++i) {
    const auto v = random_state(spec, 60 + i);
    const Vec3 d = v.particle(0) - v.particle(1);
    const double expected = -4.0 * d[0] / std::pow(d.norm(), 3);
    EXPECT_NEAR(generator_apply(v, KernelSpec{-3.0, 1e-8}, TestPolynomial::coordinate(2, 0, 0)), expected,
                1e-12 * std::abs(expected) + 1e-14);
  }
}

TEST(Generator, MatchesPairSphereFiniteDifferences) {
  const auto spec = ManifoldSpec::energy_momentum(4, Vec3(0.2, 0, 0), 1.0);
  for (double gamma : {-3.0, 0.0, 1.5}) {
    const KernelSpec k{gamma, 1e-8};
    for (int i = 0; i < 5; ++i) {
      const auto v = random_state(spec, 80 + i);
      for (const auto& phi : {TestPolynomial::coordinate(4, 0, 0), TestPolynomial::product(4, 0, 0, 1, 1),
                              TestPolynomial::product(4, 2, 2, 2, 2), TestPolynomial::product(4, 1, 0, 1, 2)}) {
        const double exact = generator_apply(v, k, phi);
        EXPECT_NEAR(exact, generator_fd(v, k, phi), 1e-5 * (1.0 + std::abs(exact))) << phi.name();
      }
    }
  }
}

TEST(LaplaceBeltrami, MatchesGeodesicFiniteDifferences) {
  for (auto spec : {ManifoldSpec::energy_only(3, 1.0), ManifoldSpec::energy_momentum(4, Vec3(0.3, 0.1, 0), 1.0)}) {
    const int n = spec.n_particles;
    const auto v = random_state(spec, 90);
    for (const auto& phi : {TestPolynomial::coordinate(n, 0, 0), TestPolynomial::product(n, 0, 0, 1, 1),
                            TestPolynomial::product(n, 1, 2, 1, 2)}) {
      const double exact = laplace_beltrami_apply(spec, v, phi);
      EXPECT_NEAR(exact, manifold_laplacian_fd(spec, v, phi), 1e-5 * (1.0 + std::abs(exact))) << phi.name();
    }
  }
}

TEST(LaplaceBeltrami, ConservedQuantitiesGiveZero) {
  const auto spec = ManifoldSpec::energy_momentum(4, Vec3(0.3, 0.1, 0), 1.0);
  const auto v = random_state(spec, 91);
  EXPECT_NEAR(laplace_beltrami_apply(spec, v, TestPolynomial::energy(4)), 0.0, 1e-12);
  EXPECT_NEAR(laplace_beltrami_apply(spec, v, TestPolynomial::momentum(4, 1)), 0.0, 1e-12);
}

TEST(Exchangeability, PermutedInputsGivePermutedTrajectory) {
  const int n = 5;
  const std::vector<int> perm = {3, 0, 4, 1, 2};
  const auto spec = ManifoldSpec::energy_momentum(n, Vec3(0.1, 0, -0.2), 1.0);
  const auto v = random_state(spec, 7);
  const VecX xi = random_vector(3 * n, 8);
  VecX xi_perm(3 * n);
  for (int k = 0; k < n; ++k) xi_perm.segment<3>(3 * perm[k]) = xi.segment<3>(3 * k);

  const auto a = step_sphere_diffusion_with_noise(spec, v, 0.01, xi);
  const auto b = step_sphere_diffusion_with_noise(spec, permute(v, perm), 0.01, xi_perm);
  EXPECT_LE((permute(a, perm).flat() - b.flat()).norm(), 1e-13);

  std::vector<PairNoise> sweep, sweep_perm;
  for (int k = 0; k < n; ++k)
    for (int l = k + 1; l < n; ++l) {
      const VecX z = random_vector(6, 100 * k + l);
      sweep.push_back({k, l, z.head<3>(), z.tail<3>()});
      sweep_perm.push_back({perm[k], perm[l], z.head<3>(), z.tail<3>()});
    }
  const KernelSpec kernel{-3.0, 1e-8};
  const auto c = step_pair_diffusion_with_noise(spec, v, kernel, 0.01, sweep);
  const auto d = step_pair_diffusion_with_noise(spec, permute(v, perm), kernel, 0.01, sweep_perm);
  EXPECT_LE((permute(c, perm).flat() - d.flat()).norm(), 1e-13);
}

TEST(StandardForm, SphereDiffusionTransformsByScaling) {
  // V = U + sqrt(eps0) V_std with dt_std = dt / eps0 maps trajectories exactly.
  const int n = 4;
  const Vec3 u(0.5, -0.3, 0.2);
  const auto spec = ManifoldSpec::energy_momentum(n, u, 2.0);
  const double eps0 = spec.eps0();
  const auto std_spec = ManifoldSpec::standard(n);
  auto x = random_state(std_spec, 12);
  auto y = VelocityState(spec.center() + std::sqrt(eps0) * x.flat());
  const double dt = 1e-2;
  for (int s = 0; s < 50; ++s) {
    const VecX xi = random_vector(3 * n, 500 + s);
    x = step_sphere_diffusion_with_noise(std_spec, x, dt / eps0, xi);
    y = step_sphere_diffusion_with_noise(spec, y, dt, xi);
  }
  EXPECT_LE((spec.center() + std::sqrt(eps0) * x.flat() - y.flat()).norm(), 1e-10);
}

TEST(StandardForm, PairDiffusionTransformsWithKernelExponent) {
  // The pair generator scales as eps0^{gamma/2}: dt_std = eps0^{gamma/2} dt.
  const int n = 4;
  const Vec3 u(0.5, -0.3, 0.2);
  const auto spec = ManifoldSpec::energy_momentum(n, u, 2.0);
  const double eps0 = spec.eps0();
  const auto std_spec = ManifoldSpec::standard(n);
  for (double gamma : {-3.0, 0.0, 2.0}) {
    const KernelSpec kernel{gamma, 1e-12};
    auto x = random_state(std_spec, 13);
    auto y = VelocityState(spec.center() + std::sqrt(eps0) * x.flat());
    const double dt = 1e-3;
    for (int s = 0; s < 30; ++s) {
      std::vector<PairNoise> sweep;
      for (int k = 0; k < n; ++k)
        for (int l = k + 1; l < n; ++l) {
          const VecX z = random_vector(6, 1000 * s + 10 * k + l);
          sweep.push_back({k, l, z.head<3>(), z.tail<3>()});
        }
      x = step_pair_diffusion_with_noise(std_spec, x, kernel, std::pow(eps0, gamma / 2) * dt, sweep);
      y = step_pair_diffusion_with_noise(spec, y, kernel, dt, sweep);
    }
    EXPECT_LE((spec.center() + std::sqrt(eps0) * x.flat() - y.flat()).norm(), 1e-10) << gamma;
  }
}

TEST(InitialSamplers, ProduceFeasibleStates) {
  const auto c1 = ManifoldSpec::energy_only(6, 1.0);
  const auto c4 = ManifoldSpec::energy_momentum(6, Vec3(0.2, 0, 0), 1.0);
  RandomStream rng(1);
  for (const char* name : {"uniform", "shear", "tagged_shift", "anisotropic"}) {
    EXPECT_TRUE(is_feasible(c1, make_initial_sampler(name, 2.0)(c1, rng), 1e-12)) << name;
    EXPECT_TRUE(is_feasible(c4, make_initial_sampler(name, 2.0)(c4, rng), 1e-12)) << name;
  }
  const auto a = make_initial_sampler("aligned")(c1, rng);
  EXPECT_TRUE(is_feasible(c1, a, 1e-12));
  EXPECT_THROW(make_initial_sampler("aligned")(c4, rng), InvalidSpec);
  EXPECT_THROW(make_initial_sampler("nope"), std::invalid_argument);
}

TEST(RunEnsemble, SingleStepShape) {
  const auto spec = ManifoldSpec::energy_only(4, 1.0);
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.t_end = 0.01;
  cfg.n_replicas = 1;
  const std::vector<Observable> obs = {parse_observable("energy")};
  const auto r = run_ensemble(spec, cfg, obs);
  ASSERT_EQ(r.series.size(), 1u);
  EXPECT_EQ(r.series[0].size(), 2u);
  EXPECT_EQ(r.series[0].stderrs[0], 0.0);
  EXPECT_NEAR(r.series[0].means[1], 1.0, 1e-12);
}

TEST(RunEnsemble, DeterministicAcrossSeedsAndThreads) {
  const auto spec = ManifoldSpec::energy_momentum(5, Vec3::Zero(), 1.0);
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.t_end = 0.2;
  cfg.n_replicas = 37;
  cfg.seed = 99;
  cfg.record_every = 3;
  cfg.process = PairDiffusion{KernelSpec{-3.0, 1e-8}};
  const std::vector<Observable> obs = {parse_observable("P1_deg2(1,2)"), parse_observable("anisotropy(3)")};
  const auto a = run_ensemble(spec, cfg, obs, make_initial_sampler("shear"));
  cfg.threads = 4;
  const auto b = run_ensemble(spec, cfg, obs, make_initial_sampler("shear"));
  for (std::size_t o = 0; o < obs.size(); ++o) {
    EXPECT_EQ(a.series[o].times, b.series[o].times);
    EXPECT_EQ(a.series[o].means, b.series[o].means);
    EXPECT_EQ(a.series[o].stderrs, b.series[o].stderrs);
  }
  EXPECT_EQ(a.series[0].size(), 8u);  // t = 0, then after steps 3, 6, ..., 18, 20
  EXPECT_NEAR(a.series[0].times.back(), 0.2, 1e-12);
  cfg.seed = 100;
  const auto c = run_ensemble(spec, cfg, obs, make_initial_sampler("shear"));
  EXPECT_NE(a.series[0].means.back(), c.series[0].means.back());
}

TEST(RunEnsemble, EquilibriumIsStationary) {
  const auto spec = ManifoldSpec::energy_momentum(6, Vec3::Zero(), 1.0);
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.t_end = 0.5;
  cfg.n_replicas = 2000;
  cfg.seed = 5;
  cfg.record_every = 25;
  const std::vector<Observable> obs = {parse_observable("P1_deg2(1,2)"), parse_observable("anisotropy(1)")};
  for (Process p : {Process{SphereDiffusion{}}, Process{PairDiffusion{KernelSpec{-3.0, 1e-8}}}}) {
    cfg.process = p;
    const auto r = run_ensemble(spec, cfg, obs);
    for (const auto& s : r.series)
      for (std::size_t i = 0; i < s.size(); ++i) EXPECT_LT(std::abs(s.means[i]), 4.0 * s.stderrs[i]) << s.name;
  }
}

TEST(WeakConsistency, SphereStepDriftMatchesLaplaceBeltrami) {
  const auto spec = ManifoldSpec::energy_momentum(4, Vec3(0.2, 0, 0), 1.0);
  const auto v0 = random_state(spec, 21);
  const double dt = 1e-3;
  for (const auto& phi : {TestPolynomial::coordinate(4, 0, 0), TestPolynomial::product(4, 0, 0, 1, 1)}) {
    const double target = laplace_beltrami_apply(spec, v0, phi);
    std::vector<double> drift;
    for (int i = 0; i < 100000; ++i) {
      RandomStream rng = derive_stream(77, i);
      VecX xi(12);
      for (auto& x : xi) x = rng.normal();
      // Antithetic pair cancels the O(sqrt(dt)) linear term.
      const double a = phi.value(step_sphere_diffusion_with_noise(spec, v0, dt, xi));
      const double b = phi.value(step_sphere_diffusion_with_noise(spec, v0, dt, -xi));
      drift.push_back((0.5 * (a + b) - phi.value(v0)) / dt);
    }
    const auto m = mean_and_error(drift);
    EXPECT_LT(std::abs(m.mean - target), 0.05 * std::abs(target) + 4.0 * m.se) << phi.name();
  }
}
