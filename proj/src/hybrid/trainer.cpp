#include "hydo/hybrid/trainer.hpp"

#include <algorithm>

#include "hydo/numerics/errors.hpp"

namespace hydo {

std::size_t object_points(const EnvConfig& config) { return config.object_points; }

std::size_t observation_points(const EnvConfig& config) {
  std::size_t discs = 0;
  if (config.task == TaskKind::push_align_2) discs = 1;
  if (config.task == TaskKind::cluttered) discs = static_cast<std::size_t>(config.obstacle_count);
  return config.object_points + discs * config.obstacle_points;
}

Trainer::Trainer(AgentConfig agent, EnvConfig env, std::uint64_t seed)
    : Trainer(
          [&] {
            RngStream init = seeded_rng(seed).split("init");
            return HybridAgent(agent, observation_points(env), object_points(env), init);
          }(),
          ReplayBuffer(agent.buffer_capacity, observation_points(env)), env, seed) {
  begin_episode();
}

Trainer::Trainer(HybridAgent agent, ReplayBuffer buffer, EnvConfig env, std::uint64_t seed)
    : seed_(seed),
      root_(seeded_rng(seed)),
      env_config_(env),
      env_(env),
      agent_(std::move(agent)),
      buffer_(std::move(buffer)) {}

void Trainer::begin_episode() {
  RngStream r = root_.split("episode", episode_);
  obs_ = env_.reset(r, ResetMode::train);
  episode_return_ = 0.0;
}

TrainStepResult Trainer::step() {
  TrainStepResult out;
  const RngStream rs = root_.split("step", step_);
  RngStream r_act = rs.split("act"), r_learn = rs.split("learn");
  const ActResult act = agent_.act(obs_, SelectMode::train, r_act, step_);
  const StepResult s = env_.step(act.action.contact, act.action.motion);
  const AgentConfig& cfg = agent_.config();
  buffer_.add(encoder_inputs(obs_, cfg), act.action.contact, act.action.motion, s.reward,
              encoder_inputs(s.observation, cfg), s.success);
  episode_return_ += s.reward;
  ++step_;
  out.step = step_;
  if (step_ > cfg.warmup && buffer_.size() >= cfg.batch_size) {
    out.metrics = agent_.learn(buffer_, r_learn);
    out.learned = true;
  }
  if (s.done) {
    out.episode = EpisodeSummary{episode_, episode_return_, s.success, static_cast<int>(env_.trace().steps())};
    ++episode_;
    begin_episode();
  } else {
    obs_ = s.observation;
  }
  return out;
}

void Trainer::put(Archive& archive) const {
  archive.put_string("trainer.env", env_config_to_json(env_config_).dump());
  archive.put_u64("trainer.meta", {seed_, step_, episode_});
  const EpisodeTrace& t = env_.trace();
  std::vector<std::uint64_t> contacts(t.contacts.begin(), t.contacts.end());
  DenseArray motions(t.motions.size(), 2);
  for (std::size_t i = 0; i < t.motions.size(); ++i) {
    motions(i, 0) = t.motions[i][0];
    motions(i, 1) = t.motions[i][1];
  }
  archive.put_u64("trainer.episode_contacts", contacts);
  archive.put("trainer.episode_motions", motions);
  archive.put("trainer.episode_return", DenseArray::scalar(episode_return_));
  agent_.put(archive, "agent");
  buffer_.put(archive, "buffer");
}

Trainer Trainer::get(const Archive& archive) {
  EnvConfig env;
  try {
    env = env_config_from_json(nlohmann::json::parse(archive.string("trainer.env")));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("trainer.env: ") + e.what());
  }
  const auto& meta = archive.u64("trainer.meta");
  if (meta.size() != 3) throw ParseError("trainer.meta: malformed");
  Trainer t(HybridAgent::get(archive, "agent"), ReplayBuffer::get(archive, "buffer"), env, meta[0]);
  if (t.agent_.points() != observation_points(env)) throw ParseError("checkpoint agent does not match its env");
  t.step_ = meta[1];
  t.episode_ = meta[2];
  t.begin_episode();
  // Replay the unfinished episode; the environment is deterministic given its reset stream.
  const auto& contacts = archive.u64("trainer.episode_contacts");
  const DenseArray& motions = archive.array("trainer.episode_motions");
  if (motions.rows() != contacts.size() || (!contacts.empty() && motions.cols() != 2)) {
    throw ParseError("trainer episode actions are malformed");
  }
  for (std::size_t i = 0; i < contacts.size(); ++i) {
    const double m[2] = {motions(i, 0), motions(i, 1)};
    const StepResult s = t.env_.step(contacts[i], m);
    if (s.done) throw ParseError("checkpointed episode replays past its end");
    t.episode_return_ += s.reward;
    t.obs_ = s.observation;
  }
  if (t.episode_return_ != archive.scalar("trainer.episode_return")) {
    throw ParseError("replayed episode does not match the checkpoint");
  }
  return t;
}

double EvalResult::success_rate() const {
  return traces.empty() ? 0.0 : static_cast<double>(successes) / static_cast<double>(traces.size());
}

EvalResult evaluate(const HybridAgent& agent, const EnvConfig& env_config, std::size_t episodes,
                    std::uint64_t seed) {
  EvalResult out;
  PushEnv env(env_config);
  const RngStream root = seeded_rng(seed);
  for (std::size_t e = 0; e < episodes; ++e) {
    const RngStream re = root.split("eval", e);
    RngStream r_reset = re.split("reset");
    PointObservation obs = env.reset(r_reset, ResetMode::eval);
    for (std::uint64_t t = 0; !env.done(); ++t) {
      RngStream r_act = re.split("act", t);
      const ActResult a = agent.act(obs, SelectMode::eval, r_act);
      out.sample_ms.push_back(a.sample_ms);
      obs = env.step(a.action.contact, a.action.motion).observation;
    }
    if (env.trace().success) ++out.successes;
    out.traces.push_back(env.trace());
  }
  return out;
}

std::array<std::size_t, 2> push_mode_counts(const HybridAgent& agent, const EnvConfig& env_config, std::size_t draws,
                                            std::uint64_t seed) {
  PushEnv env(env_config);
  const RngStream root = seeded_rng(seed);
  RngStream r_reset = root.split("reset");
  const PointObservation obs = env.reset(r_reset, ResetMode::eval);
  std::array<std::size_t, 2> counts{};
  for (std::size_t i = 0; i < draws; ++i) {
    RngStream r = root.split("draw", i);
    const ActResult a = agent.act(obs, SelectMode::train, r);
    ++counts[static_cast<std::size_t>(push_mode(a.action.motion))];
  }
  return counts;
}

}  // namespace hydo
