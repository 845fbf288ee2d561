#include "hydo/hybrid/hybrid_agent.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "hydo/numerics/errors.hpp"

namespace hydo {

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::hacman: return "hacman";
    case Algorithm::hacman_diff: return "hacman-diff";
    case Algorithm::hacman_cm: return "hacman-cm";
    case Algorithm::hydo_nodiff: return "hydo-nodiff";
    case Algorithm::hydo: return "hydo";
    case Algorithm::hydo_cm: return "hydo-cm";
  }
  return "hydo";
}

Algorithm algorithm_from_string(const std::string& name) {
  std::string n = name;
  std::replace(n.begin(), n.end(), '_', '-');
  for (Algorithm a : {Algorithm::hacman, Algorithm::hacman_diff, Algorithm::hacman_cm, Algorithm::hydo_nodiff,
                      Algorithm::hydo, Algorithm::hydo_cm}) {
    if (to_string(a) == n) return a;
  }
  throw ConfigError("unknown algorithm '" + name + "'");
}

HeadKind head_kind_of(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::hacman: return HeadKind::deterministic;
    case Algorithm::hacman_diff:
    case Algorithm::hydo: return HeadKind::ddpm;
    case Algorithm::hacman_cm:
    case Algorithm::hydo_cm: return HeadKind::consistency;
    case Algorithm::hydo_nodiff: return HeadKind::gaussian;
  }
  return HeadKind::ddpm;
}

bool is_hacman_family(Algorithm algorithm) {
  return algorithm == Algorithm::hacman || algorithm == Algorithm::hacman_diff || algorithm == Algorithm::hacman_cm;
}

void AgentConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(encoder_width >= 1, "encoder_width must be positive");
  require(!head_hidden.empty() && !critic_hidden.empty(), "hidden layer lists must be non-empty");
  for (std::size_t w : head_hidden) require(w >= 1, "head_hidden widths must be positive");
  for (std::size_t w : critic_hidden) require(w >= 1, "critic_hidden widths must be positive");
  require(k_steps >= 1, "k_steps must be at least 1");
  require(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0, "need 0 < beta_min <= beta_max < 1");
  require(flow_scale > 0.0 && position_scale > 0.0, "input scales must be positive");
  require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
  require(polyak > 0.0 && polyak <= 1.0, "polyak must lie in (0, 1]");
  require(actor_lr > 0.0 && critic_lr > 0.0 && temperature_lr > 0.0, "learning rates must be positive");
  require(batch_size >= 1, "batch_size must be positive");
  require(buffer_capacity >= batch_size, "buffer_capacity must hold a batch");
  require(beta_loc > 0.0, "beta_loc must be positive");
  require(alpha > 0.0 && alpha_loc > 0.0, "initial temperatures must be positive");
  require(actor_delay >= 1, "actor_delay must be at least 1");
  require(exploration_noise >= 0.0, "exploration_noise must be non-negative");
  require(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= 1.0,
          "epsilon values must lie in [0, 1]");
}

// ------------------------------------------------------------------ json

nlohmann::json agent_config_to_json(const AgentConfig& c) {
  return nlohmann::json{
      {"algorithm", to_string(c.algorithm)},
      {"encoder_width", c.encoder_width},
      {"head_hidden", c.head_hidden},
      {"critic_hidden", c.critic_hidden},
      {"k_steps", c.k_steps},
      {"beta_min", c.beta_min},
      {"beta_max", c.beta_max},
      {"mean_form", to_string(c.mean_form)},
      {"flow_scale", c.flow_scale},
      {"position_scale", c.position_scale},
      {"gamma", c.gamma},
      {"polyak", c.polyak},
      {"actor_lr", c.actor_lr},
      {"critic_lr", c.critic_lr},
      {"temperature_lr", c.temperature_lr},
      {"batch_size", c.batch_size},
      {"buffer_capacity", c.buffer_capacity},
      {"warmup", c.warmup},
      {"beta_loc", c.beta_loc},
      {"alpha", c.alpha},
      {"alpha_loc", c.alpha_loc},
      {"tune_motion_alpha", c.tune_motion_alpha},
      {"target_entropy", c.target_entropy},
      {"target_entropy_loc_scale", c.target_entropy_loc_scale},
      {"location_entropy", c.location_entropy},
      {"stop_location_gradient", c.stop_location_gradient},
      {"actor_delay", c.actor_delay},
      {"exploration_noise", c.exploration_noise},
      {"epsilon_start", c.epsilon_start},
      {"epsilon_end", c.epsilon_end},
      {"epsilon_decay_steps", c.epsilon_decay_steps},
  };
}

AgentConfig agent_config_from_json(const nlohmann::json& value) {
  if (!value.is_object()) throw ConfigError("agent config must be an object");
  AgentConfig c;
  const nlohmann::json known = agent_config_to_json(c);
  for (const auto& [key, v] : value.items()) {
    if (!known.contains(key)) throw ConfigError("unknown agent key '" + key + "'");
  }
  auto read = [&](const char* key, auto& field) {
    if (!value.contains(key)) return;
    try {
      value.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("agent key '") + key + "' has the wrong type");
    }
  };
  std::string algorithm = to_string(c.algorithm), mean_form = to_string(c.mean_form);
  read("algorithm", algorithm);
  c.algorithm = algorithm_from_string(algorithm);
  read("mean_form", mean_form);
  c.mean_form = mean_form_from_string(mean_form);
  read("encoder_width", c.encoder_width);
  read("head_hidden", c.head_hidden);
  read("critic_hidden", c.critic_hidden);
  read("k_steps", c.k_steps);
  read("beta_min", c.beta_min);
  read("beta_max", c.beta_max);
  read("flow_scale", c.flow_scale);
  read("position_scale", c.position_scale);
  read("gamma", c.gamma);
  read("polyak", c.polyak);
  read("actor_lr", c.actor_lr);
  read("critic_lr", c.critic_lr);
  read("temperature_lr", c.temperature_lr);
  read("batch_size", c.batch_size);
  read("buffer_capacity", c.buffer_capacity);
  read("warmup", c.warmup);
  read("beta_loc", c.beta_loc);
  read("alpha", c.alpha);
  read("alpha_loc", c.alpha_loc);
  read("tune_motion_alpha", c.tune_motion_alpha);
  read("target_entropy", c.target_entropy);
  read("target_entropy_loc_scale", c.target_entropy_loc_scale);
  read("location_entropy", c.location_entropy);
  read("stop_location_gradient", c.stop_location_gradient);
  read("actor_delay", c.actor_delay);
  read("exploration_noise", c.exploration_noise);
  read("epsilon_start", c.epsilon_start);
  read("epsilon_end", c.epsilon_end);
  read("epsilon_decay_steps", c.epsilon_decay_steps);
  c.validate();
  return c;
}

// -------------------------------------------------------------- encoding

DenseArray encoder_inputs(const PointObservation& obs, const AgentConfig& config) {
  DenseArray x = obs.inputs();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    x(r, 0) *= config.position_scale;
    x(r, 1) *= config.position_scale;
    x(r, 2) *= config.flow_scale;
    x(r, 3) *= config.flow_scale;
  }
  return x;
}

Var encode_points(Graph& graph, const MlpParams& encoder, const BoundMlp& bound, Var inputs, std::size_t points) {
  const std::size_t rows = graph.value(inputs).rows();
  if (points == 0 || rows % points != 0) {
    throw UsageError("encode_points: " + std::to_string(rows) + " rows is not a multiple of " +
                     std::to_string(points) + " points");
  }
  const Var e = mlp_forward(graph, encoder, bound, inputs);
  return graph.concat_cols({e, graph.repeat_rows(graph.group_mean(e, points), points)});
}

DenseArray encode_points(const MlpParams& encoder, const DenseArray& inputs, std::size_t points) {
  Graph g;
  return g.value(encode_points(g, encoder, bind_constants(g, encoder), g.constant(inputs), points));
}

// -------------------------------------------------------------- location

namespace {

// log of the masked softmax of beta * q in one row; masked entries -inf.
std::vector<double> row_log_policy(const double* q, const double* mask, std::size_t n, double beta) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i] != 0.0) top = std::max(top, beta * q[i]);
  if (!std::isfinite(top)) throw EnvironmentError("location policy: no object point to select");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i] != 0.0) total += std::exp(beta * q[i] - top);
  const double log_z = top + std::log(total);
  std::vector<double> out(n, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i] != 0.0) out[i] = beta * q[i] - log_z;
  return out;
}

std::size_t sample_index(std::span<const double> probs, RngStream& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last = probs.size();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last = i;
    if (u < acc) return i;
  }
  if (last == probs.size()) throw EnvironmentError("location policy has no mass");
  return last;  // rounding left u above the final cumulative sum
}

std::size_t argmax_object(std::span<const double> q, std::span<const double> mask) {
  std::size_t best = q.size();
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (mask[i] == 0.0) continue;
    if (best == q.size() || q[i] > q[best]) best = i;
  }
  if (best == q.size()) throw EnvironmentError("no object point to select");
  return best;
}

}  // namespace

DenseArray location_policy(const DenseArray& q, const DenseArray& mask, double beta) {
  if (!q.same_shape(mask)) throw UsageError("location_policy: q and mask shapes differ");
  if (!(beta > 0.0)) throw DomainError("location_policy: beta must be positive");
  DenseArray out(q.rows(), q.cols(), 0.0);
  // exp / sum rather than exp(log p): equal scores then give exactly 1 / n
  for (std::size_t r = 0; r < q.rows(); ++r) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < q.cols(); ++c)
      if (mask(r, c) != 0.0) top = std::max(top, q(r, c));
    if (top == -std::numeric_limits<double>::infinity()) throw EnvironmentError("location_policy: no object point in row");
    double total = 0.0;
    for (std::size_t c = 0; c < q.cols(); ++c) {
      if (mask(r, c) == 0.0) continue;
      out(r, c) = std::exp(beta * (q(r, c) - top));
      total += out(r, c);
    }
    for (std::size_t c = 0; c < q.cols(); ++c) out(r, c) /= total;
  }
  return out;
}

std::size_t select_location(std::span<const double> probs, std::span<const double> q, std::span<const double> mask,
                            SelectMode mode, RngStream& rng) {
  if (probs.size() != q.size() || mask.size() != q.size()) throw UsageError("select_location: size mismatch");
  if (mode == SelectMode::eval) return argmax_object(q, mask);
  return sample_index(probs, rng);
}

std::size_t epsilon_greedy_location(std::span<const double> q, std::span<const double> mask, double epsilon,
                                    RngStream& rng) {
  if (mask.size() != q.size()) throw UsageError("epsilon_greedy_location: size mismatch");
  const double u = rng.uniform();
  if (u < epsilon) {
    std::vector<std::size_t> objects;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i] != 0.0) objects.push_back(i);
    if (objects.empty()) throw EnvironmentError("no object point to select");
    return objects[rng.uniform_index(objects.size())];
  }
  return argmax_object(q, mask);
}

// ----------------------------------------------------------------- losses

HybridActorLoss hydo_actor_loss(Graph& graph, Var q, Var chain_logp, const DenseArray& mask, double beta,
                                double alpha_loc, double alpha, bool stop_location_gradient) {
  const std::size_t b = mask.rows(), n = mask.cols();
  const DenseArray& qv = graph.value(q);
  if (qv.rows() != b * n || qv.cols() != 1 || !graph.value(chain_logp).same_shape(qv)) {
    throw UsageError("hydo_actor_loss: expected (B*N x 1) q and chain log-probs for a B x N mask");
  }
  const Var qm = graph.reshape(q, b, n);
  const Var logits = graph.scale(qm, beta);
  HybridActorLoss out;
  out.probs = graph.softmax_rows(logits, mask);
  out.log_probs = graph.log_softmax_rows(logits, mask);
  const Var term = graph.sub(graph.add(graph.scale(out.log_probs, alpha_loc),
                                       graph.scale(graph.reshape(chain_logp, b, n), alpha)),
                             qm);
  const Var weights = stop_location_gradient ? graph.stop_gradient(out.probs) : out.probs;
  out.loss = graph.scale(graph.sum(graph.mul(weights, term)), 1.0 / static_cast<double>(b));
  return out;
}

Var hacman_actor_loss(Graph& graph, Var q, const DenseArray& mask) {
  const std::size_t b = mask.rows(), n = mask.cols();
  if (graph.value(q).rows() != b * n || graph.value(q).cols() != 1) {
    throw UsageError("hacman_actor_loss: expected (B*N x 1) q for a B x N mask");
  }
  double count = 0.0;
  for (double m : mask.values()) count += m != 0.0 ? 1.0 : 0.0;
  if (count == 0.0) throw EnvironmentError("hacman_actor_loss: no object points");
  DenseArray weights = mask;
  for (double& w : weights.values()) w = w != 0.0 ? -1.0 / count : 0.0;
  return graph.sum(graph.mul(graph.reshape(q, b, n), graph.constant(weights)));
}

std::vector<double> hydo_critic_target(std::span<const double> rewards, std::span<const double> terminals,
                                       const DenseArray& next_q_min, const DenseArray& next_chain_logp,
                                       const DenseArray& next_mask, double beta, const TemperatureState& temps,
                                       double gamma, const TargetTerms& terms, RngStream& rng) {
  const std::size_t b = next_q_min.rows(), n = next_q_min.cols();
  if (rewards.size() != b || terminals.size() != b || !next_chain_logp.same_shape(next_q_min) ||
      !next_mask.same_shape(next_q_min)) {
    throw UsageError("hydo_critic_target: inconsistent shapes");
  }
  std::vector<double> y(b);
  std::vector<double> probs(n);
  for (std::size_t r = 0; r < b; ++r) {
    const double* q = next_q_min.data() + r * n;
    const std::vector<double> lp = row_log_policy(q, next_mask.data() + r * n, n, beta);
    for (std::size_t i = 0; i < n; ++i) probs[i] = next_mask(r, i) != 0.0 ? std::exp(lp[i]) : 0.0;
    const std::size_t x = sample_index(probs, rng);
    y[r] = soft_target(rewards[r], terminals[r] != 0.0, q[x], terms.motion_entropy ? next_chain_logp(r, x) : 0.0,
                       terms.location_entropy ? lp[x] : 0.0, temps, gamma);
  }
  return y;
}

// ---------------------------------------------------------- replay buffer

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t points) : capacity_(capacity), points_(points) {
  if (capacity == 0 || points == 0) throw ConfigError("replay buffer needs positive capacity and point count");
}

void ReplayBuffer::add(const DenseArray& inputs, std::size_t contact, std::span<const double> motion, double reward,
                       const DenseArray& next_inputs, bool terminal) {
  if (inputs.rows() != points_ || inputs.cols() != kWidth || !next_inputs.same_shape(inputs)) {
    throw UsageError("replay buffer: expected " + std::to_string(points_) + " x 5 inputs");
  }
  if (contact >= points_ || motion.size() != 2) throw UsageError("replay buffer: bad contact or motion");
  if (!std::isfinite(reward)) throw NumericFault("replay buffer: non-finite reward");
  const std::size_t block = points_ * kWidth;
  auto write = [](std::vector<double>& dst, std::size_t at, std::span<const double> src) {
    if (at == dst.size()) dst.insert(dst.end(), src.begin(), src.end());
    else std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(at));
  };
  const std::size_t slot = next_;
  write(inputs_, slot * block, inputs.values());
  write(next_inputs_, slot * block, next_inputs.values());
  const double scalars[2] = {reward, terminal ? 1.0 : 0.0};
  write(motions_, slot * 2, motion);
  write(rewards_, slot, std::span<const double>(scalars, 1));
  write(terminals_, slot, std::span<const double>(scalars + 1, 1));
  if (slot == contacts_.size()) contacts_.push_back(contact);
  else contacts_[slot] = contact;
  next_ = (next_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

ReplayBatch ReplayBuffer::sample(std::size_t batch, RngStream& rng) const {
  if (size_ == 0) throw UsageError("replay buffer is empty");
  const std::size_t n = points_, block = n * kWidth;
  ReplayBatch out;
  out.inputs = DenseArray(batch * n, kWidth);
  out.next_inputs = DenseArray(batch * n, kWidth);
  out.mask = DenseArray(batch, n);
  out.next_mask = DenseArray(batch, n);
  out.motions = DenseArray(batch, 2);
  out.rewards = DenseArray(batch, 1);
  out.terminals = DenseArray(batch, 1);
  out.contacts.resize(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t s = rng.uniform_index(size_);
    std::copy_n(inputs_.begin() + static_cast<std::ptrdiff_t>(s * block), block, out.inputs.data() + b * block);
    std::copy_n(next_inputs_.begin() + static_cast<std::ptrdiff_t>(s * block), block,
                out.next_inputs.data() + b * block);
    for (std::size_t i = 0; i < n; ++i) {
      out.mask(b, i) = inputs_[s * block + i * kWidth + 4];
      out.next_mask(b, i) = next_inputs_[s * block + i * kWidth + 4];
    }
    out.contacts[b] = contacts_[s];
    out.motions(b, 0) = motions_[2 * s];
    out.motions(b, 1) = motions_[2 * s + 1];
    out.rewards[b] = rewards_[s];
    out.terminals[b] = terminals_[s];
  }
  return out;
}

void ReplayBuffer::put(Archive& archive, const std::string& prefix) const {
  archive.put_u64(prefix + ".meta", {capacity_, points_, size_, next_});
  archive.put_u64(prefix + ".contacts", contacts_);
  const std::size_t rows = size_ * points_;
  archive.put(prefix + ".inputs", DenseArray(rows, kWidth, inputs_));
  archive.put(prefix + ".next_inputs", DenseArray(rows, kWidth, next_inputs_));
  archive.put(prefix + ".motions", DenseArray(size_, 2, motions_));
  archive.put(prefix + ".rewards", DenseArray(size_, 1, rewards_));
  archive.put(prefix + ".terminals", DenseArray(size_, 1, terminals_));
}

ReplayBuffer ReplayBuffer::get(const Archive& archive, const std::string& prefix) {
  const auto& meta = archive.u64(prefix + ".meta");
  if (meta.size() != 4) throw ParseError(prefix + ": malformed replay buffer metadata");
  ReplayBuffer buf(meta[0], meta[1]);
  buf.size_ = meta[2];
  buf.next_ = meta[3];
  auto values = [&](const char* name, std::size_t expected) {
    const auto v = archive.array(prefix + name).values();
    if (v.size() != expected) throw ParseError(prefix + name + ": wrong length");
    return std::vector<double>(v.begin(), v.end());
  };
  const std::size_t block = buf.points_ * kWidth;
  buf.inputs_ = values(".inputs", buf.size_ * block);
  buf.next_inputs_ = values(".next_inputs", buf.size_ * block);
  buf.motions_ = values(".motions", buf.size_ * 2);
  buf.rewards_ = values(".rewards", buf.size_);
  buf.terminals_ = values(".terminals", buf.size_);
  buf.contacts_ = archive.u64(prefix + ".contacts");
  if (buf.contacts_.size() != buf.size_ || buf.size_ > buf.capacity_ || buf.next_ >= buf.capacity_) {
    throw ParseError(prefix + ": inconsistent replay buffer");
  }
  return buf;
}

// ------------------------------------------------------------------ agent

namespace {

HeadSpec head_spec_of(const AgentConfig& c) {
  HeadSpec spec;
  spec.kind = head_kind_of(c.algorithm);
  spec.mean_form = c.mean_form;
  spec.feature_dim = 2 * c.encoder_width;
  spec.action_dim = 2;
  spec.hidden = c.head_hidden;
  spec.steps = c.k_steps;
  spec.beta_min = c.beta_min;
  spec.beta_max = c.beta_max;
  return spec;
}

std::vector<std::size_t> critic_widths(const AgentConfig& c) {
  std::vector<std::size_t> w{2 * c.encoder_width + 2};
  w.insert(w.end(), c.critic_hidden.begin(), c.critic_hidden.end());
  w.push_back(1);
  return w;
}

double weighted_mean(const DenseArray& probs, const DenseArray& values) {
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (probs[i] != 0.0) acc += probs[i] * values[i];
  return acc / static_cast<double>(probs.rows());
}

}  // namespace

HybridAgent::HybridAgent(AgentConfig config, std::size_t points, std::size_t object_points, RngStream& init)
    : config_(std::move(config)), points_(points), object_points_(object_points) {
  config_.validate();
  if (points == 0 || object_points == 0 || object_points > points) {
    throw ConfigError("agent needs 1 <= object points <= points");
  }
  RngStream r_enc = init.split("encoder"), r_head = init.split("head"), r_critic = init.split("critic");
  const std::vector<std::size_t> enc{5, config_.encoder_width, config_.encoder_width};
  encoder_ = make_mlp(enc, Activation::tanh, Activation::tanh, r_enc);
  encoder_target_ = encoder_;
  encoder_adam_ = make_adam(encoder_, AdamConfig{config_.critic_lr});
  head_ = make_policy_head(head_spec_of(config_), r_head);
  head_adam_ = make_adam(head_.net, AdamConfig{config_.actor_lr});
  const std::vector<std::size_t> cw = critic_widths(config_);
  critics_ = make_critic_pair(cw, Activation::tanh, r_critic, AdamConfig{config_.critic_lr}, config_.polyak);
  temps_ = make_temperatures(config_.alpha, config_.alpha_loc, config_.target_entropy,
                             config_.target_entropy_loc_scale * std::log(static_cast<double>(object_points)),
                             config_.temperature_lr);
  temps_.tune_alpha = entropy_on() && (head_.spec.kind == HeadKind::gaussian || config_.tune_motion_alpha);
  temps_.tune_alpha_loc = entropy_on() && config_.location_entropy && object_points > 1;
}

Var HybridAgent::features(Graph& graph, const MlpParams& encoder, bool trainable, const DenseArray& inputs,
                          BoundMlp* bound) const {
  const BoundMlp b = trainable ? bind_parameters(graph, encoder) : bind_constants(graph, encoder);
  if (bound) *bound = b;
  return encode_points(graph, encoder, b, graph.constant(inputs), points_);
}

Var HybridAgent::critic_input(Graph& graph, Var features, Var motions) const {
  return graph.concat_cols({features, motions});
}

double HybridAgent::epsilon(std::uint64_t step) const {
  if (config_.epsilon_decay_steps == 0 || step >= config_.epsilon_decay_steps) return config_.epsilon_end;
  const double t = static_cast<double>(step) / static_cast<double>(config_.epsilon_decay_steps);
  return config_.epsilon_start + t * (config_.epsilon_end - config_.epsilon_start);
}

ActionMap HybridAgent::action_map(const PointObservation& obs, RngStream& rng, double* sample_ms) const {
  obs.validate();
  if (obs.size() != points_) {
    throw UsageError("agent expects " + std::to_string(points_) + " points, got " + std::to_string(obs.size()));
  }
  Graph g;
  const Var f = features(g, encoder_, false, encoder_inputs(obs, config_));
  const auto t0 = std::chrono::steady_clock::now();
  const DiffusionChain chain = sample_head(g, head_, f, rng, false);
  const auto t1 = std::chrono::steady_clock::now();
  if (sample_ms) *sample_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  ActionMap map;
  map.motions = g.value(chain.action);
  map.chain_logp = g.value(chain.total);
  const Var q = mlp_forward(g, critics_.q1, bind_constants(g, critics_.q1), critic_input(g, f, chain.action));
  map.q = g.value(q).reshaped(1, points_);
  map.probs = location_policy(map.q, obs.mask.reshaped(1, points_), config_.beta_loc);
  return map;
}

ActResult HybridAgent::act(const PointObservation& obs, SelectMode mode, RngStream& rng, std::uint64_t step) const {
  RngStream r_map = rng.split("map"), r_select = rng.split("select"), r_noise = rng.split("noise");
  ActResult out;
  out.map = action_map(obs, r_map, &out.sample_ms);
  const auto q = out.map.q.values();
  const auto mask = obs.mask.values();
  if (mode == SelectMode::train && is_hacman_family(config_.algorithm)) {
    out.action.contact = epsilon_greedy_location(q, mask, epsilon(step), r_select);
  } else {
    out.action.contact = select_location(out.map.probs.values(), q, mask, mode, r_select);
  }
  for (std::size_t d = 0; d < 2; ++d) {
    double m = out.map.motions(out.action.contact, d);
    if (mode == SelectMode::train && head_.spec.kind == HeadKind::deterministic) {
      m = std::clamp(m + config_.exploration_noise * r_noise.normal(), -1.0, 1.0);
    }
    out.action.motion[d] = m;
  }
  return out;
}

StepMetrics HybridAgent::learn(const ReplayBuffer& buffer, RngStream& rng) {
  if (buffer.points() != points_) throw UsageError("replay buffer point count does not match the agent");
  RngStream r_batch = rng.split("batch"), r_next = rng.split("next"), r_target = rng.split("target"),
            r_actor = rng.split("actor");
  const ReplayBatch batch = buffer.sample(config_.batch_size, r_batch);
  const std::size_t b = batch.size(), n = points_;
  const bool loc_entropy = entropy_on() && config_.location_entropy;
  StepMetrics m;

  // soft targets under the current actor and the target critics
  std::vector<double> y;
  {
    Graph g;
    const Var f_next = features(g, encoder_, false, batch.next_inputs);
    const DiffusionChain chain = sample_head(g, head_, f_next, r_next, false);
    const Var x = critic_input(g, features(g, encoder_target_, false, batch.next_inputs), chain.action);
    const DenseArray& q1 = g.value(mlp_forward(g, critics_.target1, bind_constants(g, critics_.target1), x));
    const DenseArray& q2 = g.value(mlp_forward(g, critics_.target2, bind_constants(g, critics_.target2), x));
    DenseArray q_min(b, n);
    for (std::size_t i = 0; i < q_min.size(); ++i) q_min[i] = std::min(q1[i], q2[i]);
    y = hydo_critic_target(batch.rewards.values(), batch.terminals.values(), q_min,
                           g.value(chain.total).reshaped(b, n), batch.next_mask, config_.beta_loc, temps_,
                           config_.gamma, TargetTerms{loc_entropy, entropy_on()}, r_target);
  }

  // critics and encoder
  {
    Graph g;
    BoundMlp be;
    const Var f = features(g, encoder_, true, batch.inputs, &be);
    std::vector<std::size_t> rows(b);
    for (std::size_t i = 0; i < b; ++i) rows[i] = i * n + batch.contacts[i];
    const Var x = critic_input(g, g.gather_rows(f, rows), g.constant(batch.motions));
    const BoundMlp b1 = bind_parameters(g, critics_.q1), b2 = bind_parameters(g, critics_.q2);
    const Var q1 = mlp_forward(g, critics_.q1, b1, x);
    const Var q2 = mlp_forward(g, critics_.q2, b2, x);
    const Var loss = critic_loss(g, q1, q2, DenseArray::column(y));
    const Gradients grads = g.backward(loss);
    const MlpParams g1 = gradients_of(grads, b1, critics_.q1), g2 = gradients_of(grads, b2, critics_.q2),
                    ge = gradients_of(grads, be, encoder_);
    adam_step(critics_.q1, g1, critics_.adam1);
    adam_step(critics_.q2, g2, critics_.adam2);
    adam_step(encoder_, ge, encoder_adam_);
    m.critic_loss = g.value(loss).item();
    double acc = 0.0;
    for (double v : g.value(q1).values()) acc += v;
    m.q_mean = acc / static_cast<double>(b);
  }
  ++updates_;

  const bool actor_due = !is_hacman_family(config_.algorithm) || updates_ % config_.actor_delay == 0;
  if (actor_due) {
    Graph g;
    const Var f = features(g, encoder_, false, batch.inputs);
    const BoundHead bh = bind_head(g, head_, true);
    const DiffusionChain chain = sample_head(g, head_, bh, project_features(g, head_, bh, f), r_actor);
    const Var q = mlp_forward(g, critics_.q1, bind_constants(g, critics_.q1), critic_input(g, f, chain.action));
    Var loss;
    if (entropy_on()) {
      const HybridActorLoss al =
          hydo_actor_loss(g, q, chain.total, batch.mask, config_.beta_loc, loc_entropy ? temps_.alpha_loc() : 0.0,
                          temps_.alpha(), config_.stop_location_gradient);
      loss = al.loss;
      const DenseArray& probs = g.value(al.probs);
      m.location_entropy = -weighted_mean(probs, g.value(al.log_probs));
      m.chain_logp = weighted_mean(probs, g.value(chain.total).reshaped(b, n));
    } else {
      loss = hacman_actor_loss(g, q, batch.mask);
    }
    adam_step(head_.net, gradients_of(g.backward(loss), bh.mlp, head_.net), head_adam_);
    m.actor_loss = g.value(loss).item();
    if (entropy_on()) {
      const TemperatureUpdate tu = update_temperature(m.chain_logp, -m.location_entropy, temps_);
      m.alpha_loss = tu.loss;
      m.alpha_loc_loss = tu.loss_loc;
    }
  }

  critics_.update_targets();
  polyak_update(encoder_target_, encoder_, config_.polyak);
  m.updates = updates_;
  m.alpha = entropy_on() ? temps_.alpha() : 0.0;
  m.alpha_loc = loc_entropy ? temps_.alpha_loc() : 0.0;
  return m;
}

void HybridAgent::put(Archive& archive, const std::string& prefix) const {
  archive.put_string(prefix + ".config", agent_config_to_json(config_).dump());
  archive.put_u64(prefix + ".meta", {points_, object_points_, updates_});
  put_mlp(archive, prefix + ".encoder", encoder_);
  put_mlp(archive, prefix + ".encoder_target", encoder_target_);
  put_adam(archive, prefix + ".encoder_adam", encoder_adam_);
  put_mlp(archive, prefix + ".head", head_.net);
  put_adam(archive, prefix + ".head_adam", head_adam_);
  put_critics(archive, prefix + ".critics", critics_);
  put_temperatures(archive, prefix + ".temps", temps_);
}

HybridAgent HybridAgent::get(const Archive& archive, const std::string& prefix) {
  HybridAgent a;
  try {
    a.config_ = agent_config_from_json(nlohmann::json::parse(archive.string(prefix + ".config")));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(prefix + ".config: " + e.what());
  }
  const auto& meta = archive.u64(prefix + ".meta");
  if (meta.size() != 3) throw ParseError(prefix + ": malformed agent metadata");
  a.points_ = meta[0];
  a.object_points_ = meta[1];
  a.updates_ = meta[2];
  a.encoder_ = get_mlp(archive, prefix + ".encoder");
  a.encoder_target_ = get_mlp(archive, prefix + ".encoder_target");
  a.encoder_adam_ = get_adam(archive, prefix + ".encoder_adam");
  a.head_ = assemble_policy_head(head_spec_of(a.config_), get_mlp(archive, prefix + ".head"));
  a.head_adam_ = get_adam(archive, prefix + ".head_adam");
  a.critics_ = get_critics(archive, prefix + ".critics");
  a.temps_ = get_temperatures(archive, prefix + ".temps");
  return a;
}

}  // namespace hydo
