// hydo: train / eval / analyze / timing front end.
// Exit codes: 0 ok, 2 bad config or arguments, 3 runtime fault.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "hydo/harness/commands.hpp"
#include "hydo/numerics/errors.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> algo;
  std::optional<std::size_t> k_steps;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Overrides& o, bool config_required = true) {
  cmd->add_option("--config", o.config, "experiment config (JSON)")->required(config_required);
  cmd->add_option("--seed", o.seed, "single seed, replaces the config's list");
  cmd->add_option("--algo", o.algo, "hacman, hacman-diff, hacman-cm, hydo-nodiff, hydo, hydo-cm");
  cmd->add_option("--k-steps", o.k_steps, "denoising steps K");
  cmd->add_option("--out", o.out, "output directory");
}

hydo::ExperimentConfig resolve(const Overrides& o) {
  hydo::ExperimentConfig c = hydo::load_experiment_config(o.config);
  if (o.seed) c.seeds = {*o.seed};
  if (o.algo) c.agent.algorithm = hydo::algorithm_from_string(*o.algo);
  if (o.k_steps) c.agent.k_steps = *o.k_steps;
  if (o.out) c.out = *o.out;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid diffusion policy experiments"};
  app.require_subcommand(1);

  Overrides train_o;
  bool resume = false;
  CLI::App* train = app.add_subcommand("train", "train every configured seed");
  add_common(train, train_o);
  train->add_flag("--resume", resume, "continue from latest.hyck when present");

  Overrides eval_o;
  std::string checkpoint;
  std::size_t episodes = 200;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_o);
  eval->add_option("--checkpoint", checkpoint, "latest.hyck or best.hyck")->required()->check(CLI::ExistingFile);
  eval->add_option("--episodes", episodes, "eval episodes")->capture_default_str();

  std::vector<std::string> inputs;
  std::string analyze_out;
  CLI::App* analyze = app.add_subcommand("analyze", "aggregate reports and traces into tables");
  analyze->add_option("inputs", inputs, "report .csv and traces .jsonl files");
  analyze->add_option("--out", analyze_out, "output directory")->required();

  Overrides timing_o;
  CLI::App* timing = app.add_subcommand("timing", "per-sample inference time over K");
  add_common(timing, timing_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) {
      const hydo::ExperimentConfig c = resolve(train_o);
      for (std::uint64_t seed : c.seeds) {
        const auto dir = hydo::run_directory(c, seed);
        const hydo::TrainOutcome r = hydo::run_train(c, seed, dir, resume, &std::cerr);
        std::printf("%s seed %llu: %llu steps", dir.string().c_str(), static_cast<unsigned long long>(seed),
                    static_cast<unsigned long long>(r.steps));
        if (r.best_step) {
          std::printf(", best eval success %.3f at step %llu", r.best_success,
                      static_cast<unsigned long long>(*r.best_step));
        }
        std::printf("\n");
      }
    } else if (*eval) {
      const hydo::ExperimentConfig c = resolve(eval_o);
      const std::string out = eval_o.out ? *eval_o.out : (std::filesystem::path(checkpoint).parent_path() / "eval").string();
      // here --seed picks the eval episode streams
      const std::uint64_t seed = eval_o.seed ? *eval_o.seed : c.eval_seed;
      const hydo::EvalOutcome r = hydo::run_eval(checkpoint, c.env, episodes, seed, out);
      std::printf("%s: success %zu/%zu (%.3f)", r.report.algorithm.c_str(), r.result.successes,
                  r.result.traces.size(), r.report.success_rate);
      if (r.report.entropy) std::printf(", behavior entropy %.3f", *r.report.entropy);
      std::printf(", %.3f ms per sample\n", r.report.mean_inference_ms);
    } else if (*analyze) {
      std::vector<std::filesystem::path> paths(inputs.begin(), inputs.end());
      const auto reports = hydo::run_analyze(paths, analyze_out);
      std::printf("%zu runs -> %s\n", reports.size(), analyze_out.c_str());
    } else if (*timing) {
      const hydo::ExperimentConfig c = resolve(timing_o);
      const std::string out = timing_o.out ? *timing_o.out : c.out;
      for (const hydo::TimingRow& r : hydo::run_timing(c, c.seeds.front(), out)) {
        std::printf("%-4s K=%-3zu mean %8.4f ms (sd %.4f), median %8.4f ms\n", r.head.c_str(), r.k, r.mean_ms, r.std_ms,
                    r.median_ms);
      }
    }
  } catch (const hydo::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
