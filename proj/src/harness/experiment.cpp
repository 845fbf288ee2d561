#include "hydo/harness/experiment.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "hydo/numerics/errors.hpp"

namespace hydo {

void ExperimentConfig::validate() const {
  agent.validate();
  env.validate();
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("seeds must be distinct");
  }
  if (steps != 0 && steps <= agent.warmup) {
    throw ConfigError("steps (" + std::to_string(steps) + ") must exceed agent.warmup (" +
                      std::to_string(agent.warmup) + ")");
  }
  if (eval_every == 0) throw ConfigError("eval_every must be positive");
  if (eval_episodes == 0) throw ConfigError("eval_episodes must be positive");
  if (checkpoint_every == 0) throw ConfigError("checkpoint_every must be positive");
  if (out.empty()) throw ConfigError("out must not be empty");
  if (timing_k.empty()) throw ConfigError("timing_k must not be empty");
  for (std::size_t k : timing_k)
    if (k == 0) throw ConfigError("timing_k entries must be positive");
  if (timing_samples == 0) throw ConfigError("timing_samples must be positive");
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
  return nlohmann::json{
      {"schema", kExperimentSchema},
      {"agent", agent_config_to_json(c.agent)},
      {"env", env_config_to_json(c.env)},
      {"seeds", c.seeds},
      {"steps", c.steps},
      {"eval_every", c.eval_every},
      {"eval_episodes", c.eval_episodes},
      {"eval_seed", c.eval_seed},
      {"checkpoint_every", c.checkpoint_every},
      {"out", c.out},
      {"timing_k", c.timing_k},
      {"timing_samples", c.timing_samples},
  };
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& value) {
  if (!value.is_object()) throw ConfigError("experiment config must be a JSON object");
  if (!value.contains("schema")) throw ConfigError("missing 'schema' key");
  if (value.at("schema") != kExperimentSchema) {
    throw ConfigError("unsupported schema " + value.at("schema").dump() + ", expected \"" + kExperimentSchema + "\"");
  }
  ExperimentConfig c;
  const nlohmann::json known = experiment_config_to_json(c);
  for (const auto& [key, v] : value.items()) {
    if (!known.contains(key)) throw ConfigError("unknown key '" + key + "'");
  }
  auto read = [&](const char* key, auto& field) {
    if (!value.contains(key)) return;
    try {
      value.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("key '") + key + "' has the wrong type");
    }
  };
  if (value.contains("agent")) c.agent = agent_config_from_json(value.at("agent"));
  if (value.contains("env")) c.env = env_config_from_json(value.at("env"));
  read("seeds", c.seeds);
  read("steps", c.steps);
  read("eval_every", c.eval_every);
  read("eval_episodes", c.eval_episodes);
  read("eval_seed", c.eval_seed);
  read("checkpoint_every", c.checkpoint_every);
  read("out", c.out);
  read("timing_k", c.timing_k);
  read("timing_samples", c.timing_samples);
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  try {
    return experiment_config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void save_experiment_config(const ExperimentConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << experiment_config_to_json(config).dump(2) << '\n';
}

}  // namespace hydo
