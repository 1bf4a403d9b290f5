#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "salgail/gail.hpp"

namespace salgail::cli {

enum ExitCode { kExitOk = 0, kExitFailure = 1, kExitInput = 2, kExitNumerical = 3, kExitConfig = 4 };

/// Options shared by every subcommand.
struct Common {
  std::string preset = "desk";
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string config;  // optional JSON file
};

GailHyper preset_by_name(const std::string& name);
nlohmann::json load_json_file(const std::filesystem::path& path);

/// Settings resolved from preset, then config file, then explicit flags.
struct Resolved {
  GailHyper hyper;
  std::optional<double> step_mag_deg;
};

/// `flags` holds only the options given on the command line, keyed like
/// the config file. Config and flag keys are GailHyper fields plus
/// "step_mag_deg".
Resolved resolve(const Common& common, const nlohmann::json& flags);

/// The hyperparameter table as "name: value" lines.
std::vector<std::string> hyper_table(const GailHyper& h);

/// Entry point behind the executable; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace salgail::cli
