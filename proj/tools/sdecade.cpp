#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "sdecade/commands.hpp"
#include "sdecade/config.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Cascade neural SDE engine"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::string config_path;
  std::string seed;
  std::string out;
  bool schema = false;
  app.add_flag("--schema", schema, "Print the config keys and exit");

  for (const auto& name : sdecade::command_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "Config file (key = value)")->required();
    sub->add_option("--seed", seed, "Override sampling.seed");
    sub->add_option("--out", out, "Override output.dir");
  }

  if (argc > 1 && std::string(argv[1]) == "--schema") {
    std::cout << sdecade::config_schema_help();
    return 0;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : sdecade::exit_code::config_error;
  }

  const auto* sub = app.get_subcommands().front();
  const bool has_seed = sub->count("--seed") > 0;
  const bool has_out = sub->count("--out") > 0;
  return sdecade::run_command_file(sub->get_name(), config_path, has_seed ? &seed : nullptr,
                                   has_out ? &out : nullptr, std::cout, std::cerr);
}
