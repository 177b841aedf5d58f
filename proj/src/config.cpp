#include "kinlab/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "kinlab/observables.hpp"
#include "kinlab/output.hpp"

namespace kinlab {

namespace {

std::string join_violations(const std::vector<std::string>& v) {
  std::string s = "invalid configuration:";
  for (const auto& x : v) s += "\n  " + x;
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

using Defaults = std::vector<std::pair<std::string, std::string>>;

const Defaults kManifold = {{"n_particles", "16"}, {"mode", "energy"}, {"u", "0,0,0"}, {"eps", "1"}};
const Defaults kKernel = {{"gamma", "-3"}, {"cutoff", "auto"}};
const Defaults kSim = {{"dt", "0.001"},         {"t_end", "1"},          {"n_replicas", "256"},
                       {"record_every", "10"}, {"initial", "uniform"},  {"initial_param", "1"},
                       {"observables", "energy, P1_deg1(1)"},           {"fit", "true"},
                       {"fit_t_min", ""},      {"fit_t_max", ""},       {"entropy_bins", "0"}};
const Defaults kCommon = {{"seed", "0"}, {"plot", "false"}, {"format", "csv"}};

Defaults concat(std::initializer_list<Defaults> parts) {
  Defaults out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

void set_default(Defaults& d, const std::string& key, const std::string& value) {
  for (auto& [k, v] : d) {
    if (k == key) {
      v = value;
      return;
    }
  }
  d.emplace_back(key, value);
}

std::optional<Defaults> defaults_for(const std::string& command) {
  Defaults d;
  if (command == "spectrum") {
    d = concat({kManifold, {{"j_max", "4"}}, kCommon});
  } else if (command == "sample") {
    d = concat({kManifold, {{"n_samples", "1000"}}, kCommon});
    set_default(d, "n_particles", "8");
  } else if (command == "sim-sphere") {
    d = concat({kManifold, kSim, kCommon});
  } else if (command == "sim-bp") {
    d = concat({kManifold, kKernel, kSim, kCommon});
    set_default(d, "mode", "energy_momentum");
    set_default(d, "n_particles", "8");
    set_default(d, "n_replicas", "64");
  } else if (command == "rayleigh") {
    d = concat({{{"n_particles", "8"}}, kKernel, {{"n_samples", "100000"}}, kCommon});
  } else if (command == "gap-scan") {
    d = concat({{{"n_list", "8,16,32,64"}}, kKernel, {{"n_samples", "100000"}}, kCommon});
  } else if (command == "marginal-compare") {
    d = concat({{{"n_list", "8,32,128"}, {"eps", "1"}, {"n_samples", "100000"}}, kCommon});
  } else if (command == "fpe-moments") {
    d = concat({kManifold,
                {{"m0", "1,0,0"},
                 {"cov0", "1,1,1"},
                 {"n_points", "10"},
                 {"t_end", "1.5"},
                 {"dt", "0.001"},
                 {"n_replicas", "0"},
                 {"initial_param", "1"}},
                kCommon});
    set_default(d, "n_particles", "512");
    set_default(d, "mode", "energy_momentum");
  } else if (command == "chaos") {
    d = concat({{{"n_list", "8,32,128"}, {"mode", "energy_momentum"}, {"u", "0,0,0"}, {"eps", "1"},
                 {"chaos_process", "bp"}},
                kKernel,
                {{"dt", "0.002"},
                 {"t_end", "1"},
                 {"initial", "anisotropic"},
                 {"initial_param", "4"},
                 {"n_samples", "100000"},
                 {"bins", "4"}},
                kCommon});
  } else {
    return std::nullopt;
  }
  d.insert(d.begin(), {"command", command});
  return d;
}

// Value parsers append to `errors` and return a fallback on failure.
class Reader {
 public:
  Reader(const std::map<std::string, ConfigEntry>& entries, std::vector<std::string>& errors)
      : entries_(entries), errors_(errors) {}

  const ConfigEntry& entry(const std::string& key) const { return entries_.at(key); }
  const std::string& text(const std::string& key) const { return entry(key).value; }

  void fail(const std::string& key, const std::string& msg) const {
    errors_.push_back(entry(key).origin + ": " + key + ": " + msg);
  }

  double real(const std::string& key, double fallback = 0.0) const {
    const auto& s = text(key);
    double x = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(x)) {
      fail(key, "expected a finite real number, got '" + s + "'");
      return fallback;
    }
    return x;
  }

  std::optional<double> optional_real(const std::string& key) const {
    if (text(key).empty()) return std::nullopt;
    return real(key);
  }

  long long integer(const std::string& key, long long lo, long long hi, long long fallback) const {
    const auto& s = text(key);
    long long x = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      fail(key, "expected an integer, got '" + s + "'");
      return fallback;
    }
    if (x < lo || x > hi) {
      fail(key, "value " + s + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
      return fallback;
    }
    return x;
  }

  std::uint64_t u64(const std::string& key) const {
    const auto& s = text(key);
    std::uint64_t x = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      fail(key, "expected an unsigned 64-bit integer, got '" + s + "'");
      return 0;
    }
    return x;
  }

  bool boolean(const std::string& key) const {
    std::string s = text(key);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
    if (s == "false" || s == "no" || s == "0" || s == "off") return false;
    fail(key, "expected true or false, got '" + text(key) + "'");
    return false;
  }

  std::vector<std::string> list(const std::string& key) const {
    // Commas inside parentheses belong to the item, e.g. P1_deg2(1,2).
    std::vector<std::string> out;
    std::string cur;
    int depth = 0;
    for (char c : text(key)) {
      if (c == '(') ++depth;
      if (c == ')') --depth;
      if (c == ',' && depth == 0) {
        out.push_back(trim(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
    return out;
  }

  Vec3 vec3(const std::string& key) const {
    const auto items = list(key);
    Vec3 v = Vec3::Zero();
    if (items.size() != 3) {
      fail(key, "expected three comma-separated numbers, got '" + text(key) + "'");
      return v;
    }
    for (int i = 0; i < 3; ++i) {
      double x = 0.0;
      const auto& s = items[i];
      const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
      if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(x)) {
        fail(key, "component '" + s + "' is not a finite number");
        return Vec3::Zero();
      }
      v[i] = x;
    }
    return v;
  }

  std::vector<int> int_list(const std::string& key) const {
    std::vector<int> out;
    for (const auto& s : list(key)) {
      int x = 0;
      const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
      if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
        fail(key, "item '" + s + "' is not an integer");
        return {};
      }
      out.push_back(x);
    }
    if (out.empty()) fail(key, "list is empty");
    return out;
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

 private:
  const std::map<std::string, ConfigEntry>& entries_;
  std::vector<std::string>& errors_;
};

std::string canonical_double(double x) { return format_double(x); }

bool known_key(const std::string& key) {
  for (const auto& c : {"spectrum", "sample", "sim-sphere", "sim-bp", "rayleigh", "gap-scan",
                        "marginal-compare", "fpe-moments", "chaos"}) {
    for (const auto& kv : *defaults_for(c)) {
      if (kv.first == key) return true;
    }
  }
  return false;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::invalid_argument(join_violations(violations)), violations_(std::move(violations)) {}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"spectrum", "sample",   "sim-sphere",
                                                 "sim-bp",   "rayleigh", "gap-scan",
                                                 "marginal-compare", "fpe-moments", "chaos"};
  return names;
}

std::vector<std::pair<std::string, std::string>> command_defaults(const std::string& command) {
  auto d = defaults_for(command);
  if (!d) throw std::invalid_argument("unknown command '" + command + "'");
  return *d;
}

std::vector<ConfigEntry> tokenize_config(const std::string& text,
                                         std::vector<std::string>* violations) {
  std::vector<ConfigEntry> out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string origin = "line " + std::to_string(number);
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
      if (violations) violations->push_back(origin + ": expected 'key = value', got '" + line + "'");
      continue;
    }
    out.push_back({trim(line.substr(0, eq)), trim(line.substr(eq + 1)), origin});
  }
  return out;
}

ExperimentPlan parse_config(const std::string& command, const std::string& text,
                            const std::vector<ConfigEntry>& overrides) {
  std::vector<std::string> violations;
  auto entries = tokenize_config(text, &violations);
  // Duplicates are only an error within the file; overrides replace.
  std::map<std::string, std::string> first_seen;
  std::vector<ConfigEntry> unique;
  for (auto& e : entries) {
    auto [it, inserted] = first_seen.emplace(e.key, e.origin);
    if (!inserted) {
      violations.push_back(e.origin + ": duplicate key '" + e.key + "' (first set on " +
                           it->second + ")");
      continue;
    }
    unique.push_back(std::move(e));
  }
  for (const auto& o : overrides) {
    auto it = std::find_if(unique.begin(), unique.end(),
                           [&](const ConfigEntry& e) { return e.key == o.key; });
    if (it != unique.end()) {
      *it = o;
    } else {
      unique.push_back(o);
    }
  }
  return parse_entries(command, std::move(unique), std::move(violations));
}

ExperimentPlan parse_entries(const std::string& command, std::vector<ConfigEntry> entries,
                             std::vector<std::string> violations) {
  const auto defaults = defaults_for(command);
  if (!defaults) throw ConfigError({"unknown command '" + command + "'"});

  std::map<std::string, ConfigEntry> table;
  for (const auto& [k, v] : *defaults) table[k] = {k, v, "default"};
  for (auto& e : entries) {
    if (!table.count(e.key)) {
      if (known_key(e.key)) {
        violations.push_back(e.origin + ": key '" + e.key + "' does not apply to command '" +
                             command + "'");
      } else {
        violations.push_back(e.origin + ": unknown key '" + e.key + "'");
      }
      continue;
    }
    if (table[e.key].origin != "default") {
      violations.push_back(e.origin + ": duplicate key '" + e.key + "' (first set on " +
                           table[e.key].origin + ")");
      continue;
    }
    table[e.key] = e;
  }

  Reader r(table, violations);
  ExperimentPlan p;
  p.command = command;
  if (r.text("command") != command) {
    r.fail("command", "config is for '" + r.text("command") + "' but '" + command + "' was requested");
  }

  const bool has_manifold = r.has("mode");
  const bool has_kernel = r.has("gamma");
  const bool has_sim = r.has("dt");

  if (r.has("n_particles")) {
    const int n = static_cast<int>(r.integer("n_particles", 1, 1 << 20, 2));
    p.spec.n_particles = n;
    if ((command == "sim-bp" || command == "rayleigh") && n < 2) {
      r.fail("n_particles", "pair processes need at least 2 particles");
    }
  }
  if (has_manifold) {
    const auto& m = r.text("mode");
    if (m == "energy" || m == "1") {
      p.spec.mode = Conservation::EnergyOnly;
    } else if (m == "energy_momentum" || m == "4") {
      p.spec.mode = Conservation::EnergyMomentum;
    } else {
      r.fail("mode", "expected 'energy' or 'energy_momentum', got '" + m + "'");
    }
    p.spec.u = r.vec3("u");
  }
  if (r.has("eps")) p.spec.eps = r.real("eps", 1.0);
  if (has_manifold && command != "chaos") {
    try {
      p.spec.validate();
    } catch (const std::exception& e) {
      const std::string key =
          p.spec.mode == Conservation::EnergyOnly && !p.spec.u.isZero(0.0) ? "u" : "eps";
      r.fail(key, e.what());
    }
  } else if (r.has("eps") && !(p.spec.eps > 0.0)) {
    r.fail("eps", "eps must be positive");
  }
  if (command == "chaos") {
    p.spec.n_particles = 2;
    try {
      p.spec.validate();
    } catch (const std::exception& e) {
      r.fail("eps", e.what());
    }
  }

  if (has_kernel) {
    p.kernel.gamma = r.real("gamma", -3.0);
    if (r.text("cutoff") == "auto") {
      p.kernel.cutoff = p.spec.eps > 0.0 ? default_cutoff(p.spec) : 1e-8;
    } else {
      p.kernel.cutoff = r.real("cutoff", 1e-8);
    }
    if (!(p.kernel.gamma > -5.0)) r.fail("gamma", "kernel exponent must satisfy gamma > -5");
    if (!(p.kernel.cutoff > 0.0)) r.fail("cutoff", "cutoff must be positive");
  }

  if (has_sim) {
    p.dt = r.real("dt", 1e-3);
    p.t_end = r.real("t_end", 1.0);
    if (!(p.dt > 0.0)) r.fail("dt", "dt must be positive");
    if (!(p.t_end >= 0.0)) {
      r.fail("t_end", "t_end must be nonnegative");
    } else if (p.t_end > 0.0 && p.dt > 0.0 && p.t_end < p.dt) {
      r.fail("t_end", "t_end must be 0 or at least dt");
    }
  }
  if (r.has("n_replicas")) {
    const long long lo = command == "fpe-moments" ? 0 : 1;
    p.n_replicas = static_cast<int>(r.integer("n_replicas", lo, 1 << 26, 1));
  }
  if (r.has("record_every")) {
    p.record_every = static_cast<int>(r.integer("record_every", 1, 1LL << 40, 1));
  }
  if (r.has("initial_param")) p.initial_param = r.real("initial_param", 1.0);
  if (r.has("initial")) {
    p.initial = r.text("initial");
    try {
      make_initial_sampler(p.initial, p.initial_param);
      if (p.initial == "aligned" && p.spec.mode != Conservation::EnergyOnly) {
        r.fail("initial", "'aligned' needs mode = energy");
      }
    } catch (const std::exception& e) {
      r.fail("initial", e.what());
    }
  }
  if (command == "fpe-moments") p.initial = "tagged_shift";
  if (r.has("observables")) {
    p.observables = r.list("observables");
    if (p.observables.empty()) r.fail("observables", "at least one observable is required");
    std::set<std::string> seen;
    for (const auto& name : p.observables) {
      try {
        parse_observable(name);
      } catch (const std::exception& e) {
        r.fail("observables", e.what());
      }
      if (!seen.insert(name).second) r.fail("observables", "observable '" + name + "' listed twice");
    }
  }
  if (r.has("fit")) {
    p.fit = r.boolean("fit");
    p.fit_t_min = r.optional_real("fit_t_min");
    p.fit_t_max = r.optional_real("fit_t_max");
    if (p.fit_t_min && p.fit_t_max && !(*p.fit_t_min < *p.fit_t_max)) {
      r.fail("fit_t_max", "fit window must satisfy fit_t_min < fit_t_max");
    }
  }
  if (r.has("entropy_bins")) p.entropy_bins = static_cast<int>(r.integer("entropy_bins", 0, 256, 0));
  if (r.has("j_max")) p.j_max = static_cast<int>(r.integer("j_max", 0, 100000, 4));
  if (r.has("n_samples")) {
    const long long lo = (command == "rayleigh" || command == "gap-scan") ? 1000 : 1;
    p.n_samples = static_cast<std::size_t>(r.integer("n_samples", lo, 1LL << 40, lo));
  }
  if (r.has("n_list")) {
    p.n_list = r.int_list("n_list");
    for (std::size_t i = 0; i < p.n_list.size(); ++i) {
      if (p.n_list[i] < 2) r.fail("n_list", "every N must be at least 2");
      if (i && p.n_list[i] <= p.n_list[i - 1]) r.fail("n_list", "N values must be strictly ascending");
    }
    if (command == "gap-scan" && p.n_list.size() < 3) {
      r.fail("n_list", "a gap scan needs at least three N values");
    }
  }
  if (r.has("bins")) p.bins = static_cast<int>(r.integer("bins", 1, 16, 4));
  if (r.has("chaos_process")) {
    p.chaos_process = r.text("chaos_process");
    if (p.chaos_process != "bp" && p.chaos_process != "sphere") {
      r.fail("chaos_process", "expected 'bp' or 'sphere'");
    }
  }
  if (r.has("m0")) {
    p.m0 = r.vec3("m0");
    p.cov0 = r.vec3("cov0");
    if (!(p.cov0.minCoeff() >= 0.0)) r.fail("cov0", "variances must be nonnegative");
    p.n_points = static_cast<int>(r.integer("n_points", 1, 100000, 10));
    if (p.n_replicas > 0 && p.dt > 0.0 && p.t_end > 0.0) {
      const long steps = std::lround(p.t_end / p.dt);
      if (steps % p.n_points != 0) {
        r.fail("n_points", "t_end/dt = " + std::to_string(steps) + " steps is not a multiple of n_points");
      } else {
        p.record_every = static_cast<int>(steps / p.n_points);
      }
    }
  }
  p.seed = r.u64("seed");
  p.plot = r.boolean("plot");
  p.format = r.text("format");
  if (p.format != "csv" && p.format != "json") r.fail("format", "expected 'csv' or 'json'");

  if (!violations.empty()) throw ConfigError(std::move(violations));

  for (const auto& [k, e] : table) p.values[k] = e.value;
  if (has_kernel) p.values["cutoff"] = canonical_double(p.kernel.cutoff);
  return p;
}

SimConfig ExperimentPlan::sim_config(unsigned threads) const {
  SimConfig c;
  c.dt = dt;
  c.t_end = t_end;
  c.n_replicas = n_replicas;
  c.seed = seed;
  c.record_every = record_every;
  c.threads = threads;
  if (command == "sim-bp" || (command == "chaos" && chaos_process == "bp")) {
    c.process = PairDiffusion{kernel};
  } else {
    c.process = SphereDiffusion{};
  }
  return c;
}

}  // namespace kinlab
