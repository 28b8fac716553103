#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace realsteer {

/// Exit codes of the command-line surface.
enum ExitCode : int { kExitOk = 0, kExitOperational = 1, kExitUsage = 2 };

/// Runs one `realsteer` invocation; args exclude the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct ToyExperimentConfig {
  std::uint64_t seed = 0;
  std::size_t steps = 8;
  std::vector<std::size_t> latent_shape{4, 8, 8};
  std::size_t classes = 4;
  std::size_t tp = 500;
  std::size_t fn = 500;
  std::size_t max_generations = 50000;
  std::size_t prompts = 200;
  std::size_t budget = 10;
  double target_fnr = 0.15;
};

/// The toy end-to-end run behind `e2e-toy`: plant a detector, collect TP/FN
/// latents, find directions, attack. Returns the RunRecord.
nlohmann::json run_toy_experiment(const ToyExperimentConfig& config);

}  // namespace realsteer
