#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "sdecade/config.hpp"

namespace sdecade {

/// Exit codes of the command-line tool.
namespace exit_code {
inline constexpr int pass = 0;
inline constexpr int validation_failure = 1;
inline constexpr int config_error = 2;
}  // namespace exit_code

/// Subcommand names accepted by run_command.
const std::vector<std::string>& command_names();

// Each command writes its CSV files under config.output_dir, prints a short
// `key: value` report to `log`, and returns exit_code::pass or
// exit_code::validation_failure. Configuration problems raise ConfigError.
int cmd_sample(const ExperimentConfig& config, std::ostream& log);
int cmd_realize(const ExperimentConfig& config, std::ostream& log);
int cmd_fit(const ExperimentConfig& config, std::ostream& log);
int cmd_fk_check(const ExperimentConfig& config, std::ostream& log);
int cmd_cascade_check(const ExperimentConfig& config, std::ostream& log);
int cmd_brackets(const ExperimentConfig& config, std::ostream& log);

/// Dispatches by name and maps exceptions to exit codes: ConfigError and
/// std::invalid_argument give config_error, any other failure gives
/// validation_failure. Messages go to `err`.
int run_command(std::string_view name, const ExperimentConfig& config, std::ostream& log, std::ostream& err);

/// Loads the config, applies the optional seed and output overrides, and runs.
int run_command_file(std::string_view name, const std::filesystem::path& config_path,
                     const std::string* seed_override, const std::string* out_override, std::ostream& log,
                     std::ostream& err);

}  // namespace sdecade
