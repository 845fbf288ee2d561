#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "hydo/envs/push_env.hpp"
#include "hydo/hybrid/hybrid_agent.hpp"

namespace hydo {

inline constexpr const char* kExperimentSchema = "hydo-experiment/1";

// Everything a run needs. The file form is a JSON object with a "schema" key
// and the fields below; "agent" and "env" are nested objects. Unknown keys at
// any level are rejected, missing ones keep their defaults.
struct ExperimentConfig {
  AgentConfig agent;
  EnvConfig env;
  std::vector<std::uint64_t> seeds{0};
  std::uint64_t steps = 20000;  // 0, or more than agent.warmup
  std::uint64_t eval_every = 1000;
  std::size_t eval_episodes = 50;
  std::uint64_t eval_seed = 7919;
  std::uint64_t checkpoint_every = 5000;
  std::string out = "runs";
  std::vector<std::size_t> timing_k{1, 2, 5, 10, 20, 50};
  std::size_t timing_samples = 200;

  void validate() const;  // ConfigError
  bool operator==(const ExperimentConfig&) const = default;
};

nlohmann::json experiment_config_to_json(const ExperimentConfig& config);
ExperimentConfig experiment_config_from_json(const nlohmann::json& value);  // ConfigError
// ConfigError on unreadable files and JSON syntax errors too.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
void save_experiment_config(const ExperimentConfig& config, const std::filesystem::path& path);

}  // namespace hydo
