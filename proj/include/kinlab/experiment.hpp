#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "kinlab/config.hpp"

namespace kinlab {

/// git describe string of the build.
std::string version_string();

struct RunOptions {
  std::filesystem::path out_dir = ".";
  unsigned threads = 1;
};

/// Executes the plan and writes into out_dir:
///   manifest.json      plan, seed, version and summary results
///   <command>.csv      result table (or <command>.json with format = json)
///   <command>.svg      when plot = true
/// Returns the manifest. Thread count never changes any output.
nlohmann::ordered_json run_experiment(const ExperimentPlan& plan, const RunOptions& options);

/// Rebuilds the plan stored in a manifest; `overrides` replace stored keys.
ExperimentPlan plan_from_manifest(const nlohmann::ordered_json& manifest,
                                  const std::vector<ConfigEntry>& overrides = {});

}  // namespace kinlab
