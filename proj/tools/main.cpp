#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ferment/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Opinion ferment simulation and optimal control"};
  app.require_subcommand(1);

  ferment::cli::Invocation inv;
  std::string config, out;
  int workers = 1;
  std::uint64_t seed = 0;

  const char* commands[][2] = {
      {"simulate", "free run and held-equilibrium run"},
      {"solve-tf", "minimum-cost total ferment"},
      {"solve-gf", "minimum-cost group ferment"},
      {"solve-mf", "budgeted max-min ferment"},
      {"select-nodes", "choose the controlled nodes"},
      {"turnpike-report", "distance of the optimal path from the equilibrium"},
      {"experiment", "ensemble sweep over a parameter grid"},
      {"selfcheck", "built-in consistency checks"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    if (std::string(name) != "selfcheck") sub->add_option("--config", config, "JSON configuration")->required();
    sub->add_option("--out", out, "output directory (overrides the config)");
    sub->add_option("--workers", workers, "worker threads, 0 for all cores")->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", seed, "base seed (overrides the config)");
    sub->callback([&, name = std::string(name), sub] {
      inv.subcommand = name;
      if (!config.empty()) inv.config = config;
      if (sub->count("--out")) inv.out = out;
      if (sub->count("--workers")) inv.workers = workers;
      if (sub->count("--seed")) inv.seed = seed;
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ferment::cli::kExitError;
  }
  return ferment::cli::run(inv, std::cerr);
}
