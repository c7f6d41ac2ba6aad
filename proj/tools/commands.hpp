#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "run_config.hpp"

namespace guq::cli {

struct Context {
  RunConfig config;
  std::uint64_t seed = 0;
  std::filesystem::path root;
  std::ostream* log = nullptr;
};

/// Root is the config's data_dir, else $GUQ_DATA_DIR, else the working
/// directory.
Context make_context(const RunConfig& config, std::uint64_t seed, std::ostream& log);

void cmd_generate(const Context& ctx);
void cmd_train_ae(const Context& ctx);
void cmd_train_estimator(const Context& ctx);
void cmd_evaluate(const Context& ctx);
void cmd_sensitivity(const Context& ctx);

/// 0 ok, 2 config, 3 data/model mismatch, 4 numeric failure, 1 other.
int exit_code_for(const std::exception& e);

/// Loads the config (empty path means defaults only), runs one subcommand,
/// and maps errors to exit codes with a message on `log`.
int run_subcommand(const std::string& name, const std::string& config_path, std::uint64_t seed,
                   std::ostream& log);

}  // namespace guq::cli
