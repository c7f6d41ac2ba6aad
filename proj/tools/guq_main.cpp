#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Sparse-sensor gust flow estimation with uncertainty quantification"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  const char* names[] = {"generate", "train-ae", "train-estimator", "evaluate", "sensitivity"};
  const char* help[] = {
      "Generate the synthetic gust dataset",
      "Train the vorticity/lift autoencoder and write latent trajectories",
      "Train the probabilistic and deterministic sensor estimators",
      "Monte Carlo dropout inference, confidence regions and the report",
      "Gramian sensor-importance analysis",
  };
  for (std::size_t i = 0; i < 5; ++i) {
    CLI::App* sub = app.add_subcommand(names[i], help[i]);
    sub->add_option("--config", config_path, "key = value run configuration")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Root seed of every random stream")->default_val(0);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  const std::string name = app.get_subcommands().front()->get_name();
  return guq::cli::run_subcommand(name, config_path, seed, std::cerr);
}
