#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hydo/envs/push_env.hpp"
#include "hydo/hybrid/hybrid_agent.hpp"
#include "hydo/numerics/archive.hpp"
#include "hydo/numerics/rng.hpp"

namespace hydo {

struct EpisodeSummary {
  std::uint64_t index = 0;
  double episode_return = 0.0;
  bool success = false;
  int steps = 0;
};

struct TrainStepResult {
  std::uint64_t step = 0;  // 1-based count of environment transitions so far
  bool learned = false;    // false during warmup
  StepMetrics metrics;
  std::optional<EpisodeSummary> episode;  // set when this step ended an episode
};

/// Online loop: act, step the environment, store, learn. Every random draw
/// comes from a stream labelled by the step index, so a run restored from a
/// checkpoint continues exactly as the uninterrupted run would.
class Trainer {
 public:
  Trainer(AgentConfig agent, EnvConfig env, std::uint64_t seed);

  TrainStepResult step();

  const HybridAgent& agent() const { return agent_; }
  HybridAgent& agent() { return agent_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const PushEnv& env() const { return env_; }
  std::uint64_t steps() const { return step_; }
  std::uint64_t seed() const { return seed_; }

  // Checkpoint: agent, buffer, counters and the current episode's actions,
  // which are replayed on restore to rebuild the environment state.
  void put(Archive& archive) const;
  static Trainer get(const Archive& archive);

 private:
  Trainer(HybridAgent agent, ReplayBuffer buffer, EnvConfig env, std::uint64_t seed);
  void begin_episode();

  std::uint64_t seed_ = 0;
  RngStream root_;
  EnvConfig env_config_;
  PushEnv env_;
  HybridAgent agent_;
  ReplayBuffer buffer_;
  PointObservation obs_;
  std::uint64_t step_ = 0;
  std::uint64_t episode_ = 0;
  double episode_return_ = 0.0;
};

struct EvalResult {
  std::vector<EpisodeTrace> traces;
  std::vector<double> sample_ms;  // one entry per decision
  std::size_t successes = 0;

  double success_rate() const;
};

// Episodes from the eval reset with argmax contacts and sampled motions.
// Episode i draws from seeded_rng(seed).split("eval", i).
EvalResult evaluate(const HybridAgent& agent, const EnvConfig& env, std::size_t episodes, std::uint64_t seed);

// Hybrid actions drawn as in training (sampled contact and motion) at the
// eval start state, tallied by push_mode: [up, down].
std::array<std::size_t, 2> push_mode_counts(const HybridAgent& agent, const EnvConfig& env, std::size_t draws,
                                            std::uint64_t seed);

// Object and total point counts for an environment config.
std::size_t observation_points(const EnvConfig& config);
std::size_t object_points(const EnvConfig& config);

}  // namespace hydo
