#include "hydo/harness/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "hydo/numerics/archive.hpp"
#include "hydo/numerics/errors.hpp"

namespace hydo {

namespace fs = std::filesystem;

namespace {

std::string num(double v) { return format_number(v); }

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream out(path, std::ios::out | mode);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

// Keeps the header and the rows whose leading step is <= `step`.
void truncate_rows(const fs::path& path, const char* header, std::uint64_t step) {
  std::vector<std::string> kept{header};
  if (fs::exists(path)) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    if (line != header) throw ParseError(path.string() + ":1: unexpected header");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoull(line.substr(0, line.find(','))) <= step) kept.push_back(line);
    }
  }
  std::ofstream out = open_out(path);
  for (const std::string& l : kept) out << l << '\n';
}

// Config fields that may change between a run and its resumption.
ExperimentConfig resumable_part(ExperimentConfig c) {
  c.steps = 0;
  c.out.clear();
  return c;
}

struct BestState {
  std::optional<std::uint64_t> step;
  double success = -1.0;
};

void put_run_meta(Archive& a, const ExperimentConfig& config, std::uint64_t seed) {
  a.put_string("run.config", experiment_config_to_json(config).dump());
  a.put_u64("run.seed", {seed});
}

void save_latest(const Trainer& t, const ExperimentConfig& config, std::uint64_t seed, const BestState& best,
                 const fs::path& path) {
  Archive a;
  t.put(a);
  put_run_meta(a, config, seed);
  a.put_u64("run.best", best.step ? std::vector<std::uint64_t>{1, *best.step} : std::vector<std::uint64_t>{0, 0});
  a.put("run.best_success", DenseArray::scalar(best.success));
  a.save(path);
}

ExperimentConfig stored_config(const Archive& a, const fs::path& path) {
  try {
    return experiment_config_from_json(nlohmann::json::parse(a.string("run.config")));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": run.config: " + e.what());
  }
}

}  // namespace

std::string metrics_row(const TrainStepResult& r) {
  const StepMetrics& m = r.metrics;
  std::string s = std::to_string(r.step) + ',' + (r.learned ? '1' : '0') + ',' + std::to_string(m.updates);
  for (double v : {m.critic_loss, m.actor_loss, m.alpha_loss, m.alpha_loc_loss, m.location_entropy, m.chain_logp,
                   m.alpha, m.alpha_loc, m.q_mean}) {
    s += ',' + num(v);
  }
  if (r.episode) {
    s += ',' + std::to_string(r.episode->index) + ',' + num(r.episode->episode_return) + ',' +
         (r.episode->success ? '1' : '0');
  } else {
    s += ",,,";
  }
  return s;
}

fs::path run_directory(const ExperimentConfig& config, std::uint64_t seed) {
  return fs::path(config.out) / to_string(config.agent.algorithm) / ("seed_" + std::to_string(seed));
}

TrainOutcome run_train(const ExperimentConfig& config, std::uint64_t seed, const fs::path& dir, bool resume,
                       std::ostream* log) {
  config.validate();
  fs::create_directories(dir);
  const fs::path latest = dir / kLatestCheckpoint;
  TrainOutcome out;
  BestState best;
  std::optional<Trainer> trainer;

  if (resume && fs::exists(latest)) {
    const Archive a = Archive::load(latest);
    if (resumable_part(stored_config(a, latest)) != resumable_part(config)) {
      throw ConfigError(latest.string() + " was written with a different config");
    }
    if (a.u64("run.seed").at(0) != seed) throw ConfigError(latest.string() + " belongs to another seed");
    trainer.emplace(Trainer::get(a));
    const auto& b = a.u64("run.best");
    if (b.at(0) != 0) best.step = b.at(1);
    best.success = a.scalar("run.best_success");
    out.start_step = trainer->steps();
    truncate_rows(dir / kMetricsFile, kMetricsHeader, out.start_step);
    truncate_rows(dir / kEvalFile, kEvalHeader, out.start_step);
  } else {
    trainer.emplace(config.agent, config.env, seed);
    if (config.steps == 0) {
      save_latest(*trainer, config, seed, best, latest);
      return out;
    }
    open_out(dir / kMetricsFile) << kMetricsHeader << '\n';
    open_out(dir / kEvalFile) << kEvalHeader << '\n';
  }
  save_experiment_config(config, dir / kConfigFile);

  std::ofstream metrics = open_out(dir / kMetricsFile, std::ios::app);
  std::ofstream evals = open_out(dir / kEvalFile, std::ios::app);
  while (trainer->steps() < config.steps) {
    TrainStepResult r;
    try {
      r = trainer->step();
    } catch (const NumericFault&) {
      metrics.flush();
      save_latest(*trainer, config, seed, best, dir / kFaultCheckpoint);
      throw;
    }
    metrics << metrics_row(r) << '\n';
    if (r.step % config.eval_every == 0) {
      const EvalResult ev = evaluate(trainer->agent(), config.env, config.eval_episodes, config.eval_seed);
      double ms = 0.0;
      for (double v : ev.sample_ms) ms += v / static_cast<double>(ev.sample_ms.size());
      evals << r.step << ',' << num(ev.success_rate()) << ',' << config.eval_episodes << ',' << num(ms) << '\n';
      if (ev.success_rate() > best.success) {
        best.success = ev.success_rate();
        best.step = r.step;
        Archive a;
        trainer->agent().put(a, "agent");
        put_run_meta(a, config, seed);
        a.put_u64("run.step", {r.step});
        a.save(dir / kBestCheckpoint);
      }
      if (log) *log << "step " << r.step << " eval success " << ev.success_rate() << std::endl;
    }
    if (r.step % config.checkpoint_every == 0 || r.step == config.steps) {
      metrics.flush();
      evals.flush();
      save_latest(*trainer, config, seed, best, latest);
    }
  }
  out.steps = trainer->steps();
  out.best_step = best.step;
  out.best_success = best.success;
  return out;
}

EvalOutcome run_eval(const fs::path& checkpoint, const EnvConfig& env, std::size_t episodes, std::uint64_t seed,
                     const fs::path& out_dir) {
  if (episodes == 0) throw ConfigError("episodes must be positive");
  env.validate();
  const Archive a = Archive::load(checkpoint);
  const HybridAgent agent = HybridAgent::get(a, "agent");
  if (agent.points() != observation_points(env)) {
    throw ConfigError(checkpoint.string() + " expects " + std::to_string(agent.points()) +
                      " observation points, the env gives " + std::to_string(observation_points(env)));
  }
  const std::uint64_t train_seed = a.contains("run.seed") ? a.u64("run.seed").at(0) : 0;
  EvalOutcome out;
  out.result = evaluate(agent, env, episodes, seed);
  const AgentConfig& ac = agent.config();
  out.report = make_run_report(to_string(ac.algorithm), train_seed, out.result.traces, env, out.result.sample_ms,
                               ac.k_steps);

  fs::create_directories(out_dir);
  {
    std::ofstream report = open_out(out_dir / "report.csv");
    write_reports_csv(report, std::span<const RunReport>(&out.report, 1));
  }
  std::ofstream traces = open_out(out_dir / "traces.jsonl");
  const nlohmann::json meta{
      {"kind", "hydo-traces/1"},
      {"algorithm", out.report.algorithm},
      {"seed", train_seed},
      {"eval_seed", seed},
      {"K", ac.k_steps},
      {"episodes", episodes},
      {"mean_inference_ms", out.report.mean_inference_ms},
      {"env", env_config_to_json(env)},
  };
  traces << meta.dump() << '\n';
  for (const EpisodeTrace& t : out.result.traces) traces << trace_to_json(t, env) << '\n';
  return out;
}

namespace {

std::vector<RunReport> read_trace_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 1;
  auto fail = [&](const std::string& what) -> ParseError {
    return ParseError(path.string() + ":" + std::to_string(line_no) + ": " + what);
  };
  if (!std::getline(in, line)) throw fail("empty trace file");
  std::string algorithm;
  std::uint64_t seed = 0;
  std::size_t k = 0;
  double ms = 0.0;
  EnvConfig env;
  try {
    const nlohmann::json meta = nlohmann::json::parse(line);
    if (meta.at("kind") != "hydo-traces/1") throw fail("not a trace file (kind " + meta.at("kind").dump() + ")");
    algorithm = meta.at("algorithm").get<std::string>();
    seed = meta.at("seed").get<std::uint64_t>();
    k = meta.at("K").get<std::size_t>();
    ms = meta.at("mean_inference_ms").get<double>();
    env = env_config_from_json(meta.at("env"));
  } catch (const nlohmann::json::exception& e) {
    throw fail(e.what());
  } catch (const ConfigError& e) {
    throw fail(e.what());
  }
  std::vector<EpisodeTrace> traces;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      traces.push_back(trace_from_json(line));
    } catch (const ParseError& e) {
      throw fail(e.what());
    }
  }
  if (traces.empty()) throw fail("no episodes after the metadata line");
  const std::vector<double> mean{ms};
  return {make_run_report(algorithm, seed, traces, env, mean, k)};
}

}  // namespace

std::vector<RunReport> run_analyze(const std::vector<fs::path>& inputs, const fs::path& out_dir) {
  std::vector<RunReport> reports;
  for (const fs::path& p : inputs) {
    std::vector<RunReport> got;
    if (p.extension() == ".csv") {
      std::ifstream in(p);
      if (!in) throw ParseError("cannot open " + p.string());
      got = read_reports_csv(in, p.string());
    } else if (p.extension() == ".jsonl") {
      got = read_trace_file(p);
    } else {
      throw ParseError(p.string() + ": expected a .csv report or a .jsonl trace file");
    }
    reports.insert(reports.end(), got.begin(), got.end());
  }
  std::stable_sort(reports.begin(), reports.end(), [](const RunReport& a, const RunReport& b) {
    return std::tie(a.algorithm, a.seed) < std::tie(b.algorithm, b.seed);
  });
  fs::create_directories(out_dir);
  {
    std::ofstream e = open_out(out_dir / "entropy.csv");
    write_reports_csv(e, reports);
  }
  std::ofstream p = open_out(out_dir / "pareto.csv");
  write_pareto_csv(p, pareto_table(reports));
  return reports;
}

std::vector<TimingRow> run_timing(const ExperimentConfig& config, std::uint64_t seed,
                                  const std::optional<fs::path>& out_dir) {
  config.validate();
  PushEnv env(config.env);
  RngStream reset = seeded_rng(seed).split("timing-reset");
  const PointObservation obs = env.reset(reset, ResetMode::eval);
  std::vector<TimingRow> rows;
  const std::pair<const char*, Algorithm> heads[] = {{"ddpm", Algorithm::hydo}, {"cm", Algorithm::hydo_cm}};
  for (const auto& [label, algorithm] : heads) {
    for (std::size_t k : config.timing_k) {
      AgentConfig ac = config.agent;
      ac.algorithm = algorithm;
      ac.k_steps = k;
      RngStream init = seeded_rng(seed).split("timing-init");
      const HybridAgent agent(ac, observation_points(config.env), object_points(config.env), init);
      const RngStream root = seeded_rng(seed).split(label, k);
      for (std::uint64_t w = 0; w < 5; ++w) {
        RngStream r = root.split("warm", w);
        agent.action_map(obs, r);
      }
      std::vector<double> ms(config.timing_samples);
      for (std::size_t i = 0; i < ms.size(); ++i) {
        RngStream r = root.split("sample", i);
        agent.action_map(obs, r, &ms[i]);
      }
      TimingRow row{label, k, 0.0, 0.0, 0.0, ms.size()};
      for (double v : ms) row.mean_ms += v / static_cast<double>(ms.size());
      if (ms.size() > 1) {
        double sq = 0.0;
        for (double v : ms) sq += (v - row.mean_ms) * (v - row.mean_ms);
        row.std_ms = std::sqrt(sq / static_cast<double>(ms.size() - 1));
      }
      std::vector<double> sorted = ms;
      std::sort(sorted.begin(), sorted.end());
      row.median_ms = percentile(sorted, 0.5);
      rows.push_back(row);
    }
  }
  if (out_dir) {
    fs::create_directories(*out_dir);
    std::ofstream out = open_out(*out_dir / "timing.csv");
    out << kTimingHeader << '\n';
    for (const TimingRow& r : rows) {
      out << r.head << ',' << r.k << ',' << num(r.mean_ms) << ',' << num(r.std_ms) << ',' << num(r.median_ms) << ',' << r.samples << '\n';
    }
  }
  return rows;
}

}  // namespace hydo
