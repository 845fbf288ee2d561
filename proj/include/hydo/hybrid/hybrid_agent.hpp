#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hydo/diffusion/policy_head.hpp"
#include "hydo/envs/push_env.hpp"
#include "hydo/numerics/adam.hpp"
#include "hydo/numerics/archive.hpp"
#include "hydo/numerics/graph.hpp"
#include "hydo/numerics/mlp.hpp"
#include "hydo/numerics/rng.hpp"
#include "hydo/sac/soft_actor_critic.hpp"

namespace hydo {

// hacman*: no entropy terms, epsilon-greedy location, per-point actor, delayed
// actor updates. hydo*: soft location policy and the entropy-weighted hybrid
// actor loss.
enum class Algorithm { hacman, hacman_diff, hacman_cm, hydo_nodiff, hydo, hydo_cm };

std::string to_string(Algorithm algorithm);
Algorithm algorithm_from_string(const std::string& name);  // accepts "hacman-diff" and "hacman_diff"
HeadKind head_kind_of(Algorithm algorithm);
bool is_hacman_family(Algorithm algorithm);

struct AgentConfig {
  Algorithm algorithm = Algorithm::hydo;
  std::size_t encoder_width = 32;  // per-point embedding; features are twice this wide
  std::vector<std::size_t> head_hidden{32, 32};
  std::vector<std::size_t> critic_hidden{32, 32};
  std::size_t k_steps = 5;
  double beta_min = 1e-4;
  double beta_max = 0.05;
  MeanForm mean_form = MeanForm::residual;
  double flow_scale = 5.0;      // encoder sees flows * flow_scale
  double position_scale = 2.0;  // and positions * position_scale

  double gamma = 0.95;
  double polyak = 0.01;
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  double temperature_lr = 3e-4;
  std::size_t batch_size = 32;
  std::size_t buffer_capacity = 100000;
  std::size_t warmup = 500;

  double beta_loc = 1.0;
  double alpha = 0.01;     // motion temperature, initial value
  double alpha_loc = 0.1;  // location temperature, initial value
  bool tune_motion_alpha = false;
  double target_entropy = -2.0;
  double target_entropy_loc_scale = 0.5;  // target = scale * log(object points)
  bool location_entropy = true;
  bool stop_location_gradient = false;  // detach pi_loc weights in the actor loss

  // hacman family
  std::size_t actor_delay = 2;
  double exploration_noise = 0.1;  // deterministic head only
  double epsilon_start = 1.0;
  double epsilon_end = 0.1;
  std::uint64_t epsilon_decay_steps = 2000;

  void validate() const;  // ConfigError
  bool operator==(const AgentConfig&) const = default;
};

// --------------------------------------------------------------- encoding

// N x 5 encoder input: scaled positions, scaled flows, mask.
DenseArray encoder_inputs(const PointObservation& obs, const AgentConfig& config);

// Shared per-point network followed by a mean-pooled context per block of
// `points` rows: (B*N x 5) -> (B*N x 2W), each row [e_i, mean_j e_j].
Var encode_points(Graph& graph, const MlpParams& encoder, const BoundMlp& bound, Var inputs, std::size_t points);
DenseArray encode_points(const MlpParams& encoder, const DenseArray& inputs, std::size_t points);

// --------------------------------------------------------------- location

// Masked softmax of beta * q per row with max subtraction. q and mask are
// B x N. EnvironmentError if a row has no object point.
DenseArray location_policy(const DenseArray& q, const DenseArray& mask, double beta);

enum class SelectMode { train, eval };

// train: sample from probs; eval: argmax of q over object points, lowest index on ties.
std::size_t select_location(std::span<const double> probs, std::span<const double> q,
                            std::span<const double> mask, SelectMode mode, RngStream& rng);

// Uniform object point with probability epsilon, otherwise the eval argmax.
std::size_t epsilon_greedy_location(std::span<const double> q, std::span<const double> mask, double epsilon,
                                    RngStream& rng);

// ---------------------------------------------------------------- losses

struct HybridActorLoss {
  Var loss;
  Var probs;      // B x N
  Var log_probs;  // B x N
};

// mean_b sum_i pi_bi [ -q_bi + alpha_loc * log pi_bi + alpha * chain_logp_bi ],
// pi = masked softmax(beta * q). q and chain_logp are (B*N x 1), mask B x N.
HybridActorLoss hydo_actor_loss(Graph& graph, Var q, Var chain_logp, const DenseArray& mask, double beta,
                                double alpha_loc, double alpha, bool stop_location_gradient = false);

// Per-point deterministic actor: masked mean of -q.
Var hacman_actor_loss(Graph& graph, Var q, const DenseArray& mask);

struct TargetTerms {
  bool location_entropy = true;
  bool motion_entropy = true;
};

// One-sample soft targets. next_q_min and next_chain_logp are B x N values
// under the current actor and the target critics; x ~ softmax(beta * q_min)
// is drawn per row and composed through soft_target.
std::vector<double> hydo_critic_target(std::span<const double> rewards, std::span<const double> terminals,
                                       const DenseArray& next_q_min, const DenseArray& next_chain_logp,
                                       const DenseArray& next_mask, double beta, const TemperatureState& temps,
                                       double gamma, const TargetTerms& terms, RngStream& rng);

// ------------------------------------------------------------ replay buffer

struct ReplayBatch {
  DenseArray inputs;       // B*N x 5
  DenseArray mask;         // B x N
  DenseArray next_inputs;  // B*N x 5
  DenseArray next_mask;    // B x N
  std::vector<std::size_t> contacts;
  DenseArray motions;    // B x 2
  DenseArray rewards;    // B x 1
  DenseArray terminals;  // B x 1

  std::size_t size() const { return contacts.size(); }
};

/// Ring buffer of hybrid transitions with a fixed point count.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t points);

  // inputs are N x 5 encoder inputs.
  void add(const DenseArray& inputs, std::size_t contact, std::span<const double> motion, double reward,
           const DenseArray& next_inputs, bool terminal);
  ReplayBatch sample(std::size_t batch, RngStream& rng) const;  // uniform with replacement

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t points() const { return points_; }

  void put(Archive& archive, const std::string& prefix) const;
  static ReplayBuffer get(const Archive& archive, const std::string& prefix);

  bool operator==(const ReplayBuffer&) const = default;

 private:
  static constexpr std::size_t kWidth = 5;

  std::size_t capacity_ = 0;
  std::size_t points_ = 0;
  std::size_t size_ = 0;
  std::size_t next_ = 0;
  std::vector<double> inputs_;
  std::vector<double> next_inputs_;
  std::vector<std::uint64_t> contacts_;
  std::vector<double> motions_;
  std::vector<double> rewards_;
  std::vector<double> terminals_;
};

// ------------------------------------------------------------------ agent

struct HybridAction {
  std::size_t contact = 0;
  std::array<double, 2> motion{};
};

struct ActionMap {
  DenseArray motions;     // N x 2
  DenseArray chain_logp;  // N x 1
  DenseArray q;           // 1 x N, critic 1
  DenseArray probs;       // 1 x N, location policy
};

struct ActResult {
  HybridAction action;
  ActionMap map;
  double sample_ms = 0.0;  // action-map sampling only
};

struct StepMetrics {
  std::uint64_t updates = 0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha_loss = 0.0;
  double alpha_loc_loss = 0.0;
  double location_entropy = 0.0;  // pi-weighted, nats
  double chain_logp = 0.0;        // pi-weighted mean
  double alpha = 0.0;
  double alpha_loc = 0.0;
  double q_mean = 0.0;
};

class HybridAgent {
 public:
  HybridAgent(AgentConfig config, std::size_t points, std::size_t object_points, RngStream& init);

  // Samples the per-point motion map and scores it with critic 1. sample_ms
  // gets the wall time of the chain sampling alone.
  ActionMap action_map(const PointObservation& obs, RngStream& rng, double* sample_ms = nullptr) const;

  // step feeds the hacman epsilon schedule; ignored otherwise.
  ActResult act(const PointObservation& obs, SelectMode mode, RngStream& rng, std::uint64_t step = 0) const;

  // One critic update, then actor and temperature updates when due, then polyak.
  StepMetrics learn(const ReplayBuffer& buffer, RngStream& rng);

  double epsilon(std::uint64_t step) const;

  const AgentConfig& config() const { return config_; }
  std::size_t points() const { return points_; }
  const PolicyHead& head() const { return head_; }
  const MlpParams& encoder() const { return encoder_; }
  const CriticPair& critics() const { return critics_; }
  const TemperatureState& temperatures() const { return temps_; }
  std::uint64_t updates() const { return updates_; }

  // Mutable access for tests and tools.
  PolicyHead& head() { return head_; }
  CriticPair& critics() { return critics_; }
  MlpParams& encoder() { return encoder_; }

  void put(Archive& archive, const std::string& prefix) const;
  static HybridAgent get(const Archive& archive, const std::string& prefix);

  bool operator==(const HybridAgent&) const = default;

 private:
  HybridAgent() = default;
  Var features(Graph& graph, const MlpParams& encoder, bool trainable, const DenseArray& inputs,
               BoundMlp* bound = nullptr) const;
  Var critic_input(Graph& graph, Var features, Var motions) const;
  bool entropy_on() const { return !is_hacman_family(config_.algorithm); }

  AgentConfig config_;
  std::size_t points_ = 0;
  std::size_t object_points_ = 0;
  MlpParams encoder_;
  MlpParams encoder_target_;
  AdamState encoder_adam_;
  PolicyHead head_;
  AdamState head_adam_;
  CriticPair critics_;
  TemperatureState temps_;
  std::uint64_t updates_ = 0;
};

// JSON object with every field; parsing rejects unknown keys and missing
// fields fall back to defaults. ConfigError on bad values or types.
nlohmann::json agent_config_to_json(const AgentConfig& config);
AgentConfig agent_config_from_json(const nlohmann::json& value);

}  // namespace hydo
