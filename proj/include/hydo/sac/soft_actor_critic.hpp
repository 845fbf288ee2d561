#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hydo/numerics/adam.hpp"
#include "hydo/numerics/archive.hpp"
#include "hydo/numerics/graph.hpp"
#include "hydo/numerics/mlp.hpp"

namespace hydo {

/// Temperatures for the location (alpha1) and motion (alpha) entropy terms,
/// each tuned on its log by Adam toward a target entropy, or held fixed.
struct TemperatureState {
  double log_alpha = 0.0;      // motion
  double log_alpha_loc = 0.0;  // location
  double target_entropy = -2.0;
  double target_entropy_loc = 0.0;
  bool tune_alpha = true;
  bool tune_alpha_loc = true;
  AdamState adam;      // over [log_alpha]
  AdamState adam_loc;  // over [log_alpha_loc]

  double alpha() const;
  double alpha_loc() const;
  bool operator==(const TemperatureState&) const = default;
};

TemperatureState make_temperatures(double alpha, double alpha_loc, double target_entropy,
                                   double target_entropy_loc, double learning_rate);

struct TransitionBatch {
  DenseArray states;       // B x state_dim
  DenseArray actions;      // B x action_dim
  DenseArray rewards;      // B x 1
  DenseArray next_states;  // B x state_dim
  DenseArray terminals;    // B x 1, 0 or 1

  std::size_t size() const { return rewards.rows(); }
  void validate() const;  // UsageError on ragged or non-finite batches
};

// y = r + (1 - terminal) * gamma * (next_min_q - alpha1 * next_loc_logp - alpha * next_chain_logp)
double soft_target(double reward, bool terminal, double next_min_q, double next_chain_logp,
                   double next_loc_logp, const TemperatureState& temps, double gamma);

// 0.5 * (mean_b (q1 - y)^2 + mean_b (q2 - y)^2). The targets are plain values,
// so nothing flows back into whatever produced them.
Var critic_loss(Graph& graph, Var q1, Var q2, const DenseArray& targets);

// mean_b [ -q1 + alpha * chain_logp ]
Var actor_loss_diffusion(Graph& graph, Var q1, Var chain_logp, double alpha);

// alpha * (-mean_logp - target) as a function of the log-temperature leaf.
Var temperature_loss(Graph& graph, Var log_alpha, double mean_logp, double target_entropy);

struct TemperatureUpdate {
  double loss = 0.0;
  double loss_loc = 0.0;
};

// One dual step on each tuned log-temperature.
TemperatureUpdate update_temperature(double mean_chain_logp, double mean_loc_logp, TemperatureState& temps);

// target <- (1 - tau) * target + tau * online, per parameter. DomainError unless tau in (0, 1].
void polyak_update(MlpParams& target, const MlpParams& online, double tau);

/// Twin Q networks with their targets and optimizers.
struct CriticPair {
  MlpParams q1, q2;
  MlpParams target1, target2;
  AdamState adam1, adam2;
  double polyak = 0.005;

  void update_targets() {
    polyak_update(target1, q1, polyak);
    polyak_update(target2, q2, polyak);
  }
  bool operator==(const CriticPair&) const = default;
};

CriticPair make_critic_pair(std::span<const std::size_t> widths, Activation hidden, RngStream& rng,
                            const AdamConfig& adam, double polyak);

void put_temperatures(Archive& archive, const std::string& prefix, const TemperatureState& temps);
TemperatureState get_temperatures(const Archive& archive, const std::string& prefix);
void put_critics(Archive& archive, const std::string& prefix, const CriticPair& critics);
CriticPair get_critics(const Archive& archive, const std::string& prefix);

}  // namespace hydo
