#include "kinlab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <regex>

#include "kinlab/kinetic_limits.hpp"
#include "kinlab/observables.hpp"
#include "kinlab/output.hpp"
#include "kinlab/parallel.hpp"
#include "kinlab/spectral.hpp"

#ifndef KINLAB_VERSION
#define KINLAB_VERSION "unknown"
#endif

namespace kinlab {

using json = nlohmann::ordered_json;

std::string version_string() { return KINLAB_VERSION; }

namespace {

struct Outcome {
  Table table;
  json results = json::object();
  std::vector<PlotSeries> plot;
  PlotOptions plot_options;
};

std::string mode_name(Conservation c) {
  return c == Conservation::EnergyOnly ? "energy" : "energy_momentum";
}

json spec_json(const ManifoldSpec& s) {
  return {{"n_particles", s.n_particles},
          {"mode", mode_name(s.mode)},
          {"u", {s.u[0], s.u[1], s.u[2]}},
          {"eps", s.eps},
          {"eps0", s.eps0()}};
}

// ---------------------------------------------------------------------------

Outcome run_spectrum(const ExperimentPlan& p) {
  Outcome o;
  const auto t = spectrum_table(p.spec, p.j_max);
  o.table.columns = {"j", "unscaled", "scaled", "limit", "scaled_minus_limit"};
  PlotSeries scaled{"finite N", {}, {}}, limit{"N to infinity", {}, {}};
  for (const auto& e : t.entries) {
    o.table.add_row({std::to_string(e.j), std::to_string(e.unscaled), format_double(e.scaled),
                     format_double(e.limit), format_double(e.scaled - e.limit)});
    scaled.x.push_back(e.j);
    scaled.y.push_back(e.scaled);
    limit.x.push_back(e.j);
    limit.y.push_back(e.limit);
  }
  o.results = {{"spec", spec_json(p.spec)}, {"eps_eff", t.eps_eff}};
  o.plot = {scaled, limit};
  o.plot_options = {"Laplacian spectrum", "j", "eigenvalue", false};
  return o;
}

Outcome run_sample(const ExperimentPlan& p, unsigned threads) {
  Outcome o;
  std::vector<VelocityState> states(p.n_samples);
  parallel_for(p.n_samples, threads, [&](std::size_t i) {
    RandomStream rng = derive_stream(p.seed, i);
    states[i] = sample_uniform(p.spec, rng);
  });
  o.table.columns = {"sample", "particle", "v1", "v2", "v3"};
  double max_e = 0.0, max_p = 0.0, speed2 = 0.0;
  std::vector<double> speeds;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto r = constraint_residual(p.spec, states[i]);
    max_e = std::max(max_e, r.energy);
    max_p = std::max(max_p, r.momentum);
    for (int k = 0; k < p.spec.n_particles; ++k) {
      const Vec3 v = states[i].particle(k);
      o.table.add_row({std::to_string(i), std::to_string(k + 1), format_double(v[0]),
                       format_double(v[1]), format_double(v[2])});
      speed2 += (v - p.spec.u).squaredNorm();
      speeds.push_back((v - p.spec.u).norm());
    }
  }
  const double count = static_cast<double>(speeds.size());
  o.results = {{"spec", spec_json(p.spec)},
               {"max_energy_residual", max_e},
               {"max_momentum_residual", max_p},
               {"mean_squared_peculiar_speed", speed2 / count},
               {"expected_mean_squared_peculiar_speed",
                p.spec.radius2() / p.spec.n_particles}};
  std::sort(speeds.begin(), speeds.end());
  PlotSeries ecdf{"empirical speed CDF", {}, {}};
  const std::size_t stride = std::max<std::size_t>(1, speeds.size() / 400);
  for (std::size_t i = 0; i < speeds.size(); i += stride) {
    ecdf.x.push_back(speeds[i]);
    ecdf.y.push_back((i + 1) / count);
  }
  o.plot = {ecdf};
  o.plot_options = {"Peculiar speed distribution", "|v - u|", "CDF", false};
  return o;
}

/// Exact decay rate of an observable's ensemble mean, where one is known.
std::optional<double> reference_rate(const ExperimentPlan& p, const std::string& name) {
  static const std::regex head_re(R"(^\s*([A-Za-z_0-9]+))");
  std::smatch m;
  if (!std::regex_search(name, m, head_re)) return std::nullopt;
  const std::string head = m[1];
  int degree = 0;
  if (head == "P1_deg1" || head == "group_mean") degree = 1;
  if (head == "P1_deg2" || head == "P1_diff2" || head == "P1_axial2" || head == "anisotropy") {
    degree = 2;
  }
  if (head == "P1_deg3_xyz" || head == "P1_deg3_cubic") degree = 3;
  if (degree == 0) return std::nullopt;
  if (p.command == "sim-sphere") {
    if (head == "P1_deg1" && p.spec.mode == Conservation::EnergyMomentum) return 0.0;
    return eigenvalue_scaled(p.spec, degree);
  }
  if (head == "anisotropy" && p.kernel.gamma == 0.0) {
    return pair_diffusion_anisotropy_rate(p.kernel, p.spec.n_particles);
  }
  return std::nullopt;
}

Outcome run_sim(const ExperimentPlan& p, unsigned threads) {
  Outcome o;
  std::vector<Observable> obs;
  for (const auto& name : p.observables) obs.push_back(parse_observable(name));
  o.table.columns = {"time"};
  for (const auto& ob : obs) {
    o.table.columns.push_back(ob.name + " mean");
    o.table.columns.push_back(ob.name + " stderr");
  }
  if (p.entropy_bins > 0) o.table.columns.push_back("relative_entropy");
  o.results["spec"] = spec_json(p.spec);
  if (p.command == "sim-bp") o.results["kernel"] = {{"gamma", p.kernel.gamma}, {"cutoff", p.kernel.cutoff}};
  if (p.t_end == 0.0) return o;

  std::vector<double> entropy;
  RecordCallback on_record;
  if (p.entropy_bins > 0) {
    const LimitParams lp = LimitParams::from_spec(p.spec);
    const VelocityGrid grid = entropy_grid(lp, p.entropy_bins);
    on_record = [&entropy, lp, grid](const EnsembleSnapshot& s) {
      entropy.push_back(relative_entropy(marginal_histogram(s, 1, grid), lp));
    };
  }
  const auto run = run_ensemble(p.spec, p.sim_config(threads), obs,
                                make_initial_sampler(p.initial, p.initial_param), on_record);
  const auto& series = run.series;
  for (std::size_t i = 0; i < series.front().size(); ++i) {
    std::vector<double> row = {series.front().times[i]};
    for (const auto& s : series) {
      row.push_back(s.means[i]);
      row.push_back(s.stderrs[i]);
    }
    if (p.entropy_bins > 0) row.push_back(entropy[i]);
    o.table.add_numeric_row(row);
  }

  json fits = json::object();
  for (const auto& s : series) {
    json f;
    const auto ref = reference_rate(p, s.name);
    if (ref) f["reference_rate"] = *ref;
    if (p.fit) {
      try {
        FitOptions fo;
        fo.t_min = p.fit_t_min;
        fo.t_max = p.fit_t_max;
        const auto fit = decay_rate_fit(s, fo);
        f["rate"] = fit.rate;
        f["rate_stderr"] = fit.rate_stderr;
        f["ci95"] = {fit.ci_low, fit.ci_high};
        f["r_squared"] = fit.r_squared;
        f["n_points"] = fit.n_points;
        f["non_exponential"] = fit.non_exponential;
        if (ref && *ref != 0.0) f["relative_error"] = (fit.rate - *ref) / *ref;
      } catch (const std::exception& e) {
        f["fit_error"] = e.what();
      }
    }
    fits[s.name] = f;
    o.plot.push_back({s.name, s.times, s.means});
  }
  o.results["fits"] = fits;
  if (p.entropy_bins > 0) o.results["final_relative_entropy"] = entropy.back();
  o.plot_options = {p.command == "sim-bp" ? "Pair diffusion" : "Sphere diffusion", "t",
                    "ensemble mean", false};
  return o;
}

Outcome run_rayleigh(const ExperimentPlan& p, unsigned threads) {
  Outcome o;
  const auto tf = TrialFunction::standard(p.spec.n_particles);
  const auto est = rayleigh_quotient_mc(tf, p.kernel, p.n_samples, p.seed, threads);
  const double bound = lambda1_bound(p.spec.n_particles);
  o.table.columns = {"n_particles", "estimate", "std_error", "bound", "samples"};
  o.table.add_row({std::to_string(p.spec.n_particles), format_double(est.estimate),
                   format_double(est.std_error), format_double(bound), std::to_string(est.samples)});
  o.results = {{"n_particles", p.spec.n_particles},
               {"kernel", {{"gamma", p.kernel.gamma}, {"cutoff", p.kernel.cutoff}}},
               {"trial_A", tf.a_const},
               {"trial_C", tf.c_const},
               {"estimate", est.estimate},
               {"std_error", est.std_error},
               {"bound", bound},
               {"below_bound_within_3_stderr", est.estimate <= bound + 3.0 * est.std_error}};
  return o;
}

Outcome run_gap_scan(const ExperimentPlan& p, unsigned threads) {
  Outcome o;
  const auto r = gap_scan(p.n_list, p.kernel, p.n_samples, p.seed, threads);
  o.table.columns = {"n_particles", "estimate", "std_error", "bound"};
  PlotSeries est{"Rayleigh estimate", {}, {}}, bnd{"bound", {}, {}};
  for (const auto& row : r.rows) {
    o.table.add_row({std::to_string(row.n_particles), format_double(row.estimate),
                     format_double(row.std_error), format_double(row.bound)});
    est.x.push_back(row.n_particles);
    est.y.push_back(row.estimate);
    bnd.x.push_back(row.n_particles);
    bnd.y.push_back(row.bound);
  }
  o.results = {{"kernel", {{"gamma", p.kernel.gamma}, {"cutoff", p.kernel.cutoff}}},
               {"exponent", r.exponent},
               {"exponent_stderr", r.exponent_stderr}};
  o.plot = {est, bnd};
  o.plot_options = {"Variational gap estimate", "N", "lambda", true};
  return o;
}

Outcome run_marginal_compare(const ExperimentPlan& p, unsigned threads) {
  Outcome o;
  o.table.columns = {"n_particles", "sup_distance", "ks_statistic", "ks_critical_99", "samples"};
  json rows = json::array();
  for (int n : p.n_list) {
    const auto spec = ManifoldSpec::energy_only(n, p.spec.eps);
    const LimitParams lp = LimitParams::from_spec(spec);
    const double r_hi = 8.0 * lp.sigma();
    double sup = 0.0;
    for (int i = 0; i <= 4000; ++i) {
      const Vec3 v(r_hi * i / 4000.0, 0.0, 0.0);
      sup = std::max(sup, std::abs(stationary_marginal_eval(spec, std::span<const Vec3>(&v, 1)) -
                                   maxwellian_eval(lp, v)));
    }
    std::vector<double> speeds(p.n_samples);
    parallel_for(p.n_samples, threads, [&](std::size_t i) {
      RandomStream rng = derive_stream(p.seed, static_cast<std::uint64_t>(n), i);
      const auto s = sample_uniform(spec, rng);
      speeds[i] = s.particle(static_cast<int>(i % n)).norm();
    });
    const StationarySpeedCdf cdf(spec);
    const double ks = ks_statistic(std::move(speeds), [&](double r) { return cdf(r); });
    const double crit = ks_critical_value(p.n_samples, 0.01);
    o.table.add_numeric_row({static_cast<double>(n), sup, ks, crit, static_cast<double>(p.n_samples)});
    rows.push_back({{"n_particles", n}, {"sup_distance", sup}, {"ks_statistic", ks},
                    {"ks_critical_99", crit}});
  }
  o.results = {{"eps", p.spec.eps}, {"rows", rows}};
  return o;
}

Outcome run_fpe_moments(const ExperimentPlan& p, unsigned threads) {
  Outcome o;
  const LimitParams lp = LimitParams::from_spec(p.spec);
  const Mat3 M0 = Mat3(p.cov0.asDiagonal()) + p.m0 * p.m0.transpose();
  const bool simulate = p.n_replicas > 0 && p.t_end > 0.0;
  o.table.columns = {"time", "m1", "m2", "m3", "M11", "M12", "M13", "M22", "M23", "M33"};
  if (simulate) {
    for (const char* c : {"group_mean", "group_stderr", "group_oracle", "z_score"}) {
      o.table.columns.push_back(c);
    }
  }
  std::optional<ObservableSeries> sim;
  if (simulate) {
    const std::vector<Observable> obs = {parse_observable("group_mean(1)")};
    auto cfg = p.sim_config(threads);
    sim = run_ensemble(p.spec, cfg, obs, make_initial_sampler("tagged_shift", p.initial_param))
              .series.front();
  }
  const double k = 1.5 / lp.eps0;
  double max_z = 0.0;
  int within = 0;
  PlotSeries sim_plot{"simulation", {}, {}}, oracle_plot{"oracle", {}, {}};
  for (int i = 0; i <= p.n_points; ++i) {
    const double t = p.t_end * i / p.n_points;
    const auto ms = fpe_moment_flow(lp, p.m0, M0, t);
    std::vector<double> row = {t,
                               ms.mean[0],
                               ms.mean[1],
                               ms.mean[2],
                               ms.second(0, 0),
                               ms.second(0, 1),
                               ms.second(0, 2),
                               ms.second(1, 1),
                               ms.second(1, 2),
                               ms.second(2, 2)};
    if (sim) {
      const double g = sim->means[i];
      const double se = sim->stderrs[i];
      const double oracle = sim->means[0] * std::exp(-k * sim->times[i]);
      const double z = se > 0.0 ? (g - oracle) / se : 0.0;
      row.insert(row.end(), {g, se, oracle, z});
      if (i > 0) {
        max_z = std::max(max_z, std::abs(z));
        within += std::abs(z) <= 3.0;
      }
      sim_plot.x.push_back(t);
      sim_plot.y.push_back(g);
      oracle_plot.x.push_back(t);
      oracle_plot.y.push_back(oracle);
    }
    o.table.add_numeric_row(row);
  }
  o.results = {{"limit", {{"u", {lp.u[0], lp.u[1], lp.u[2]}}, {"eps0", lp.eps0}}},
               {"mean_rate", k},
               {"covariance_rate", 2.0 * k},
               {"mean_half_life", std::log(2.0) / k}};
  if (sim) {
    o.results["simulation"] = {{"spec", spec_json(p.spec)},
                               {"checkpoints", p.n_points},
                               {"within_3_stderr", within},
                               {"max_abs_z", max_z}};
    o.plot = {sim_plot, oracle_plot};
    o.plot_options = {"Tagged-group mean relaxation", "t", "group mean", false};
  }
  return o;
}

Outcome run_chaos(const ExperimentPlan& p, unsigned threads) {
  Outcome o;
  o.table.columns = {"n_particles", "replicas", "pair_samples", "chaos_distance", "outside_fraction"};
  json rows = json::array();
  PlotSeries dist{"chaos distance", {}, {}};
  for (int n : p.n_list) {
    ManifoldSpec spec = p.spec;
    spec.n_particles = n;
    spec.validate();
    // Matched particle counts keep the histogram noise level independent of N.
    const std::size_t nn = static_cast<std::size_t>(n);
    const int replicas = static_cast<int>(std::max<std::size_t>(2, (p.n_samples + nn - 1) / nn));
    EnsembleSnapshot snap;
    const auto sampler = make_initial_sampler(p.initial, p.initial_param);
    if (p.t_end > 0.0) {
      ExperimentPlan q = p;
      q.n_replicas = replicas;
      q.record_every = static_cast<int>(std::max<long>(1, std::lround(p.t_end / p.dt)));
      q.seed = mix64(p.seed ^ static_cast<std::uint64_t>(n));
      snap = run_ensemble(spec, q.sim_config(threads), {}, sampler).final_snapshot;
    } else {
      snap.states.resize(static_cast<std::size_t>(replicas));
      for (int r = 0; r < replicas; ++r) {
        RandomStream rng = derive_stream(mix64(p.seed ^ static_cast<std::uint64_t>(n)), r, 0);
        snap.states[r] = sampler(spec, rng);
      }
    }
    const LimitParams lp = LimitParams::from_spec(spec);
    const auto grid = VelocityGrid::centered(lp.u, 2.5 * lp.sigma(), p.bins);
    const auto h1 = marginal_histogram(snap, 1, grid);
    const auto h2 = marginal_histogram(snap, 2, grid);
    const double d = chaos_distance(h2, h1);
    o.table.add_numeric_row({static_cast<double>(n), static_cast<double>(replicas),
                             static_cast<double>(h2.samples), d, h2.outside_fraction});
    rows.push_back({{"n_particles", n}, {"replicas", replicas}, {"chaos_distance", d}});
    dist.x.push_back(n);
    dist.y.push_back(d);
  }
  o.results = {{"process", p.chaos_process}, {"time", p.t_end}, {"rows", rows}};
  o.plot = {dist};
  o.plot_options = {"Two-particle factorization", "N", "L1 distance", true};
  return o;
}

}  // namespace

json run_experiment(const ExperimentPlan& plan, const RunOptions& options) {
  const unsigned threads = std::max(1u, options.threads);
  Outcome o;
  const auto& c = plan.command;
  if (c == "spectrum") o = run_spectrum(plan);
  else if (c == "sample") o = run_sample(plan, threads);
  else if (c == "sim-sphere" || c == "sim-bp") o = run_sim(plan, threads);
  else if (c == "rayleigh") o = run_rayleigh(plan, threads);
  else if (c == "gap-scan") o = run_gap_scan(plan, threads);
  else if (c == "marginal-compare") o = run_marginal_compare(plan, threads);
  else if (c == "fpe-moments") o = run_fpe_moments(plan, threads);
  else if (c == "chaos") o = run_chaos(plan, threads);
  else throw std::invalid_argument("unknown command '" + c + "'");

  std::filesystem::create_directories(options.out_dir);
  json outputs = json::array();
  const std::string table_name = c + (plan.format == "json" ? ".json" : ".csv");
  write_text(options.out_dir / table_name, plan.format == "json" ? to_json(o.table) : to_csv(o.table));
  outputs.push_back(table_name);
  if (plan.plot && !o.plot.empty()) {
    o.plot_options.title += " (" + c + ")";
    write_text(options.out_dir / (c + ".svg"), svg_line_plot(o.plot, o.plot_options));
    outputs.push_back(c + ".svg");
  }

  json manifest;
  manifest["tool"] = "kinlab";
  manifest["version"] = version_string();
  manifest["command"] = c;
  manifest["seed"] = plan.seed;
  json plan_json = json::object();
  for (const auto& [k, v] : plan.values) plan_json[k] = v;
  manifest["plan"] = plan_json;
  manifest["outputs"] = outputs;
  manifest["results"] = o.results;
  write_text(options.out_dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

ExperimentPlan plan_from_manifest(const json& manifest, const std::vector<ConfigEntry>& overrides) {
  if (!manifest.contains("command") || !manifest.contains("plan") || !manifest["plan"].is_object()) {
    throw ConfigError({"manifest: missing 'command' or 'plan'"});
  }
  std::vector<ConfigEntry> entries;
  for (const auto& [k, v] : manifest["plan"].items()) {
    if (!v.is_string()) throw ConfigError({"manifest: plan value for '" + k + "' is not a string"});
    entries.push_back({k, v.get<std::string>(), "manifest plan." + k});
  }
  for (const auto& o : overrides) {
    auto it = std::find_if(entries.begin(), entries.end(),
                           [&](const ConfigEntry& e) { return e.key == o.key; });
    if (it != entries.end()) {
      *it = o;
    } else {
      entries.push_back(o);
    }
  }
  return parse_entries(manifest["command"].get<std::string>(), std::move(entries));
}

}  // namespace kinlab
