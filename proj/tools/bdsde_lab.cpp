#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "bdsde/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Run a configured BDSDE experiment and write its artifacts."};
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool list = false;
  bool quiet = false;
  app.add_option("--config", config, "scenario config file (key = value)");
  app.add_option("--out", out, "output directory (default ./out or the config's output_dir)");
  app.add_option("--seed", seed, "override the config seed");
  app.add_flag("--list", list, "list the available scenarios and exit");
  app.add_flag("--quiet", quiet, "suppress the per-check summary");
  app.footer("Environment: BDSDE_THREADS caps the number of worker threads.");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : bdsde::kExitError;
  }

  if (list) {
    std::cout << bdsde::list_scenarios();
    return 0;
  }
  if (config.empty()) {
    std::cerr << "error: --config is required (use --list to see scenarios)\n";
    return bdsde::kExitError;
  }

  bdsde::RunOptions opts;
  opts.config_path = config;
  if (!out.empty()) opts.out_dir = out;
  opts.seed = seed;
  opts.quiet = quiet;
  return bdsde::run(opts, std::cout, std::cerr);
}
