#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stablehjb/app.hpp"

int main(int argc, char** argv) {
  namespace app = stablehjb::app;
  CLI::App cli{"Stable-noise HJB experiments"};
  std::string subcommand, config;
  std::vector<std::string> overrides;
  std::string out;
  cli.add_option("subcommand", subcommand, "check-noise | check-hypothesis | check-ou | solve-hjb | verify | report")
      ->required()
      ->check(CLI::IsMember(app::subcommands()));
  cli.add_option("--config", config, "TOML config file")->required();
  cli.add_option("--set", overrides, "override a config key, e.g. --set mc.seed=3")->take_all();
  cli.add_option("--out", out, "output directory (overrides output.dir)");
  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return app::kConfig;
  }
  std::optional<std::filesystem::path> out_dir;
  if (!out.empty()) out_dir = out;
  return app::run(subcommand, config, overrides, out_dir, std::cerr);
}
