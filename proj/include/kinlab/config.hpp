#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kinlab/geometry.hpp"
#include "kinlab/master_sim.hpp"

namespace kinlab {

/// All configuration violations found in one pass.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

/// Subcommands of the experiment runner.
const std::vector<std::string>& command_names();

/// One fully validated experiment. Fields not used by `command` keep their
/// defaults; `values` holds the canonical text of every key that applies to
/// the command, defaults included, and is what the run manifest records.
struct ExperimentPlan {
  std::string command;
  ManifoldSpec spec;
  KernelSpec kernel;
  double dt = 1e-3;
  double t_end = 1.0;
  int n_replicas = 0;
  int record_every = 10;
  std::string initial = "uniform";
  double initial_param = 1.0;
  std::vector<std::string> observables;
  bool fit = true;
  std::optional<double> fit_t_min;
  std::optional<double> fit_t_max;
  int entropy_bins = 0;
  int j_max = 4;
  std::size_t n_samples = 0;
  std::vector<int> n_list;
  int bins = 4;
  std::string chaos_process = "bp";
  Vec3 m0 = Vec3::Zero();
  Vec3 cov0 = Vec3::Ones();
  int n_points = 10;
  std::uint64_t seed = 0;
  bool plot = false;
  std::string format = "csv";

  std::map<std::string, std::string> values;

  SimConfig sim_config(unsigned threads) const;
};

/// One `key = value` assignment with its origin, for error messages.
struct ConfigEntry {
  std::string key;
  std::string value;
  std::string origin;  // e.g. "line 7" or "--set"
};

/// Splits config text into entries. Blank lines and `#` comments are ignored.
/// Malformed lines and duplicate keys are reported together with any later
/// validation errors by parse_config.
std::vector<ConfigEntry> tokenize_config(const std::string& text,
                                         std::vector<std::string>* violations = nullptr);

/// Parses and validates a configuration for `command`. `overrides` are applied
/// after the file (a later assignment of the same key replaces the earlier
/// one). Throws ConfigError listing every violation.
ExperimentPlan parse_config(const std::string& command, const std::string& text,
                            const std::vector<ConfigEntry>& overrides = {});

/// Same, from already tokenized entries.
ExperimentPlan parse_entries(const std::string& command, std::vector<ConfigEntry> entries,
                             std::vector<std::string> violations = {});

/// Documented keys of a command with their default values.
std::vector<std::pair<std::string, std::string>> command_defaults(const std::string& command);

}  // namespace kinlab
