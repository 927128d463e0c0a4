// Command-line front end: run a preset or config file, list presets, sweep
// one parameter.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "decoherence/decoherence.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
namespace ex = decoherence::experiments;

namespace {

fs::path output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("DECOHERENCE_OUTPUT_DIR"); env && *env) return env;
  return "out";
}

ex::Scenario load(const std::string& presetName, const std::string& configPath) {
  if (!presetName.empty() && !configPath.empty())
    throw decoherence::ConfigError("give either --preset or --config, not both");
  if (!presetName.empty()) {
    ex::Scenario s = ex::preset(presetName);
    s.validate();
    return s;
  }
  if (!configPath.empty()) return ex::load_config(configPath);
  throw decoherence::ConfigError("one of --preset or --config is required");
}

void report(const ex::RunResult& r, const fs::path& dir) {
  nlohmann::json j;
  j["scenario"] = r.scenario.name;
  j["out"] = dir.string();
  j["breakdown_time"] = r.breakdownTime ? nlohmann::json(*r.breakdownTime) : nlohmann::json(nullptr);
  j["S_thermal"] = r.thermal.entropy;
  for (const auto& [m, st] : r.status)
    j["status"][ex::to_string(m)] = st.completed ? std::string("ok") : st.error;
  std::cout << j.dump() << "\n";
}

int fail(const std::string& kind, const std::string& message) {
  nlohmann::json j{{"error", kind}, {"message", message}};
  std::cerr << j.dump() << "\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open quantum oscillator decoherence: exact, analytic and master-equation runs"};
  app.require_subcommand(1);

  std::string presetName, configPath, outDir;

  auto* run = app.add_subcommand("run", "run one scenario and write CSVs plus a manifest");
  run->add_option("--preset", presetName, "preset name (see list-presets)");
  run->add_option("--config", configPath, "config file with key = value lines");
  run->add_option("--out", outDir, "output directory (default $DECOHERENCE_OUTPUT_DIR or ./out)");

  auto* list = app.add_subcommand("list-presets", "print preset names and descriptions");

  std::string param;
  std::vector<std::string> values;
  auto* sweep = app.add_subcommand("sweep", "run a scenario once per value of one parameter");
  sweep->add_option("--preset", presetName, "base preset");
  sweep->add_option("--config", configPath, "base config file");
  sweep->add_option("--param", param, "config key to vary")->required();
  sweep->add_option("--values", values, "comma-separated values")->required()->delimiter(',');
  sweep->add_option("--out", outDir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail("UsageError", e.what());
  }

  try {
    if (*list) {
      for (const auto& name : ex::preset_names()) {
        const ex::Scenario s = ex::preset(name);
        std::cout << name << "\t" << s.description << "\n";
      }
      return 0;
    }
    if (*run) {
      const ex::Scenario s = load(presetName, configPath);
      const fs::path dir = output_root(outDir) / s.name;
      const ex::RunResult r = ex::run_scenario(s);
      ex::write_outputs(r, dir);
      report(r, dir);
      return 0;
    }
    if (*sweep) {
      const ex::Scenario base = load(presetName, configPath);
      const fs::path root = output_root(outDir) / (base.name + "-sweep-" + param);
      for (const auto& v : values) {
        ex::Scenario s = base;
        ex::set_field(s, param, v);
        s.validate();
        const fs::path dir = root / (param + "=" + v);
        const ex::RunResult r = ex::run_scenario(s);
        ex::write_outputs(r, dir);
        report(r, dir);
      }
      return 0;
    }
  } catch (const decoherence::Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail("InternalError", e.what());
  }
  return 0;
}
