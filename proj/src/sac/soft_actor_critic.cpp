#include "hydo/sac/soft_actor_critic.hpp"

#include <algorithm>
#include <cmath>

#include "hydo/numerics/errors.hpp"

namespace hydo {

double TemperatureState::alpha() const { return std::exp(log_alpha); }
double TemperatureState::alpha_loc() const { return std::exp(log_alpha_loc); }

TemperatureState make_temperatures(double alpha, double alpha_loc, double target_entropy,
                                   double target_entropy_loc, double learning_rate) {
  if (!(alpha > 0.0 && alpha_loc > 0.0)) throw ConfigError("initial temperatures must be positive");
  TemperatureState t;
  t.log_alpha = std::log(alpha);
  t.log_alpha_loc = std::log(alpha_loc);
  t.target_entropy = target_entropy;
  t.target_entropy_loc = target_entropy_loc;
  const DenseArray scalar = DenseArray::scalar(0.0);
  const std::vector<const DenseArray*> one{&scalar};
  t.adam = make_adam(one, AdamConfig{learning_rate});
  t.adam_loc = make_adam(one, AdamConfig{learning_rate});
  return t;
}

void TransitionBatch::validate() const {
  const std::size_t b = rewards.rows();
  if (rewards.cols() != 1 || terminals.rows() != b || terminals.cols() != 1 || states.rows() != b ||
      actions.rows() != b || next_states.rows() != b || next_states.cols() != states.cols()) {
    throw UsageError("transition batch has inconsistent shapes");
  }
  if (!rewards.all_finite()) throw UsageError("transition batch has non-finite rewards");
}

double soft_target(double reward, bool terminal, double next_min_q, double next_chain_logp,
                   double next_loc_logp, const TemperatureState& temps, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw DomainError("discount must lie in [0, 1)");
  if (terminal) return reward;
  const double soft_value = next_min_q - temps.alpha_loc() * next_loc_logp - temps.alpha() * next_chain_logp;
  const double y = reward + gamma * soft_value;
  if (!std::isfinite(y)) throw NumericFault("non-finite soft target");
  return y;
}

Var critic_loss(Graph& graph, Var q1, Var q2, const DenseArray& targets) {
  const auto& v1 = graph.value(q1);
  if (!v1.same_shape(graph.value(q2)) || v1.rows() != targets.rows() || v1.cols() != 1 || targets.cols() != 1) {
    throw UsageError("critic_loss: expected matching B x 1 critics and targets");
  }
  const Var y = graph.constant(targets);
  const Var l1 = graph.mean(graph.square(graph.sub(q1, y)));
  const Var l2 = graph.mean(graph.square(graph.sub(q2, y)));
  return graph.scale(graph.add(l1, l2), 0.5);
}

Var actor_loss_diffusion(Graph& graph, Var q1, Var chain_logp, double alpha) {
  if (!graph.value(q1).same_shape(graph.value(chain_logp))) throw UsageError("actor_loss: shape mismatch");
  return graph.mean(graph.sub(graph.scale(chain_logp, alpha), q1));
}

Var temperature_loss(Graph& graph, Var log_alpha, double mean_logp, double target_entropy) {
  return graph.scale(graph.exp(log_alpha), -mean_logp - target_entropy);
}

namespace {

double dual_step(double& log_alpha, AdamState& adam, double mean_logp, double target) {
  Graph g;
  DenseArray value = DenseArray::scalar(log_alpha);
  const Var leaf = g.parameter(value);
  const Var loss = temperature_loss(g, leaf, mean_logp, target);
  const std::vector<DenseArray> grads{g.backward(loss).wrt(leaf)};
  const std::vector<DenseArray*> params{&value};
  adam_step(params, grads, adam);
  log_alpha = value.item();
  return g.value(loss).item();
}

}  // namespace

TemperatureUpdate update_temperature(double mean_chain_logp, double mean_loc_logp, TemperatureState& temps) {
  TemperatureUpdate out;
  if (temps.tune_alpha) out.loss = dual_step(temps.log_alpha, temps.adam, mean_chain_logp, temps.target_entropy);
  if (temps.tune_alpha_loc) {
    out.loss_loc = dual_step(temps.log_alpha_loc, temps.adam_loc, mean_loc_logp, temps.target_entropy_loc);
  }
  return out;
}

void polyak_update(MlpParams& target, const MlpParams& online, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw DomainError("polyak coefficient must lie in (0, 1]");
  auto dst = parameter_arrays(target);
  const auto src = parameter_arrays(online);
  if (dst.size() != src.size()) throw UsageError("polyak_update: network structures differ");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (!dst[i]->same_shape(*src[i])) throw UsageError("polyak_update: parameter shapes differ");
    auto d = dst[i]->values();
    const auto s = src[i]->values();
    if (tau == 1.0) {
      std::copy(s.begin(), s.end(), d.begin());
      continue;
    }
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = (1.0 - tau) * d[j] + tau * s[j];
  }
}

CriticPair make_critic_pair(std::span<const std::size_t> widths, Activation hidden, RngStream& rng,
                            const AdamConfig& adam, double polyak) {
  CriticPair c;
  RngStream r1 = rng.split("q1"), r2 = rng.split("q2");
  c.q1 = make_mlp(widths, hidden, Activation::identity, r1);
  c.q2 = make_mlp(widths, hidden, Activation::identity, r2);
  c.target1 = c.q1;
  c.target2 = c.q2;
  c.adam1 = make_adam(c.q1, adam);
  c.adam2 = make_adam(c.q2, adam);
  c.polyak = polyak;
  return c;
}

void put_temperatures(Archive& archive, const std::string& prefix, const TemperatureState& t) {
  archive.put(prefix + ".values", DenseArray::row({t.log_alpha, t.log_alpha_loc, t.target_entropy,
                                                    t.target_entropy_loc}));
  archive.put_u64(prefix + ".tune", {t.tune_alpha ? 1u : 0u, t.tune_alpha_loc ? 1u : 0u});
  put_adam(archive, prefix + ".adam", t.adam);
  put_adam(archive, prefix + ".adam_loc", t.adam_loc);
}

TemperatureState get_temperatures(const Archive& archive, const std::string& prefix) {
  TemperatureState t;
  const auto& v = archive.array(prefix + ".values");
  const auto& tune = archive.u64(prefix + ".tune");
  if (v.size() != 4 || tune.size() != 2) throw ParseError(prefix + ": malformed temperatures");
  t.log_alpha = v[0];
  t.log_alpha_loc = v[1];
  t.target_entropy = v[2];
  t.target_entropy_loc = v[3];
  t.tune_alpha = tune[0] != 0;
  t.tune_alpha_loc = tune[1] != 0;
  t.adam = get_adam(archive, prefix + ".adam");
  t.adam_loc = get_adam(archive, prefix + ".adam_loc");
  return t;
}

void put_critics(Archive& archive, const std::string& prefix, const CriticPair& c) {
  put_mlp(archive, prefix + ".q1", c.q1);
  put_mlp(archive, prefix + ".q2", c.q2);
  put_mlp(archive, prefix + ".target1", c.target1);
  put_mlp(archive, prefix + ".target2", c.target2);
  put_adam(archive, prefix + ".adam1", c.adam1);
  put_adam(archive, prefix + ".adam2", c.adam2);
  archive.put(prefix + ".polyak", DenseArray::scalar(c.polyak));
}

CriticPair get_critics(const Archive& archive, const std::string& prefix) {
  CriticPair c;
  c.q1 = get_mlp(archive, prefix + ".q1");
  c.q2 = get_mlp(archive, prefix + ".q2");
  c.target1 = get_mlp(archive, prefix + ".target1");
  c.target2 = get_mlp(archive, prefix + ".target2");
  c.adam1 = get_adam(archive, prefix + ".adam1");
  c.adam2 = get_adam(archive, prefix + ".adam2");
  c.polyak = archive.scalar(prefix + ".polyak");
  return c;
}

}  // namespace hydo
