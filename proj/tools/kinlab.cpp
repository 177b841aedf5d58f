// kinlab: experiment runner.
//
//   kinlab <command> [--config PATH] [--out DIR] [--seed U64] [--threads K]
//                    [--format csv|json] [--set key=value]... [--plot]
//                    [--print-config]
//
// PATH may be a key=value config file or a manifest.json from an earlier run.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "kinlab/config.hpp"
#include "kinlab/experiment.hpp"

namespace {

using json = nlohmann::ordered_json;

struct Args {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> format;
  std::vector<std::string> sets;
  bool plot = false;
  bool print_config = false;
};

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw kinlab::ConfigError({"cannot read config file '" + path + "'"});
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

unsigned resolve_threads(const Args& a) {
  if (a.threads) return std::max(1u, *a.threads);
  if (const char* env = std::getenv("KINLAB_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) {
      throw kinlab::ConfigError({std::string("KINLAB_THREADS: expected a positive integer, got '") +
                                 env + "'"});
    }
    return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

int report_error(const std::string& kind, const std::string& message,
                 const std::vector<std::string>& violations, const std::string& out_dir, int code) {
  json err = {{"error", kind}, {"message", message}};
  if (!violations.empty()) err["violations"] = violations;
  std::cerr << err.dump(2) << "\n";
  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    std::ofstream f(std::filesystem::path(out_dir) / "error.json");
    if (f) f << err.dump(2) << "\n";
  }
  return code;
}

int run(const std::string& command, const Args& a) {
  std::vector<kinlab::ConfigEntry> overrides;
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw kinlab::ConfigError({"--set: expected key=value, got '" + s + "'"});
    }
    overrides.push_back({s.substr(0, eq), s.substr(eq + 1), "--set"});
  }
  if (a.seed) overrides.push_back({"seed", std::to_string(*a.seed), "--seed"});
  if (a.format) overrides.push_back({"format", *a.format, "--format"});
  if (a.plot) overrides.push_back({"plot", "true", "--plot"});

  kinlab::ExperimentPlan plan;
  const std::string text = a.config.empty() ? std::string() : read_file(a.config);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json manifest;
    try {
      manifest = json::parse(text);
    } catch (const std::exception& e) {
      throw kinlab::ConfigError({"manifest: " + std::string(e.what())});
    }
    if (manifest.value("command", command) != command) {
      throw kinlab::ConfigError({"manifest was written by '" + manifest.value("command", "") +
                                 "', not '" + command + "'"});
    }
    plan = kinlab::plan_from_manifest(manifest, overrides);
  } else {
    plan = kinlab::parse_config(command, text, overrides);
  }

  if (a.print_config) {
    for (const auto& [k, v] : plan.values) std::cout << k << " = " << v << "\n";
    return 0;
  }
  const auto manifest = kinlab::run_experiment(plan, {a.out, resolve_threads(a)});
  std::cout << manifest.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kinlab: master-equation numerical laboratory"};
  app.require_subcommand(1);
  Args args;
  for (const auto& name : kinlab::command_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", args.config, "key=value config file or manifest.json");
    sub->add_option("--out", args.out, "output directory")->capture_default_str();
    sub->add_option("--seed", args.seed, "random seed (overrides the config)");
    sub->add_option("--threads", args.threads, "worker threads; results do not depend on it")
        ->check(CLI::PositiveNumber);
    sub->add_option("--format", args.format, "table format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--set", args.sets, "extra key=value assignment (repeatable)");
    sub->add_flag("--plot", args.plot, "also write an SVG plot");
    sub->add_flag("--print-config", args.print_config, "print the resolved config and exit");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return report_error("usage", e.what(), {}, "", 2);
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, args);
  } catch (const kinlab::ConfigError& e) {
    return report_error("config", "invalid configuration", e.violations(), args.out, 2);
  } catch (const std::exception& e) {
    return report_error("runtime", e.what(), {}, args.out, 1);
  }
}
