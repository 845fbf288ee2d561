#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hydo/analysis/metrics.hpp"
#include "hydo/harness/experiment.hpp"
#include "hydo/hybrid/trainer.hpp"

namespace hydo {

// Run directory files.
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kEvalFile = "eval.csv";
inline constexpr const char* kLatestCheckpoint = "latest.hyck";
inline constexpr const char* kBestCheckpoint = "best.hyck";
inline constexpr const char* kFaultCheckpoint = "fault.hyck";
inline constexpr const char* kConfigFile = "config.json";

inline constexpr const char* kMetricsHeader =
    "step,learned,updates,critic_loss,actor_loss,alpha_loss,alpha_loc_loss,location_entropy,chain_logp,alpha,"
    "alpha_loc,q_mean,episode,episode_return,success";
inline constexpr const char* kEvalHeader = "step,success_rate,episodes,mean_inference_ms";
inline constexpr const char* kTimingHeader = "head,K,mean_ms,std_ms,median_ms,samples";

std::string metrics_row(const TrainStepResult& result);

struct TrainOutcome {
  std::uint64_t steps = 0;
  std::uint64_t start_step = 0;  // nonzero after a resume
  std::optional<std::uint64_t> best_step;
  double best_success = -1.0;
};

// Trains one seed into `dir`: config.json, metrics.csv (one row per
// environment step), eval.csv (every eval_every steps), latest.hyck at the
// checkpoint cadence and at the end, best.hyck holding the agent with the
// highest eval success so far (earliest wins ties). With `resume` an existing
// latest.hyck is continued; its stored config must equal `config`. A
// NumericFault writes fault.hyck and propagates. steps == 0 writes the
// initial checkpoint and nothing else.
TrainOutcome run_train(const ExperimentConfig& config, std::uint64_t seed, const std::filesystem::path& dir,
                       bool resume = false, std::ostream* log = nullptr);

// Run directory for one seed under config.out.
std::filesystem::path run_directory(const ExperimentConfig& config, std::uint64_t seed);

struct EvalOutcome {
  RunReport report;
  EvalResult result;
};

// Loads the agent from a checkpoint (full or best), runs `episodes` eval
// episodes on `env` and writes report.csv and traces.jsonl to `out_dir`.
// traces.jsonl starts with one metadata object. ConfigError if the checkpoint
// was trained on a different observation size; ParseError for a bad file.
EvalOutcome run_eval(const std::filesystem::path& checkpoint, const EnvConfig& env, std::size_t episodes,
                     std::uint64_t seed, const std::filesystem::path& out_dir);

// Reads report CSVs and traces.jsonl files (by extension), writes entropy.csv
// (run rows sorted by algorithm then seed) and pareto.csv to `out_dir`.
// ParseError with file and line on malformed input.
std::vector<RunReport> run_analyze(const std::vector<std::filesystem::path>& inputs,
                                   const std::filesystem::path& out_dir);

struct TimingRow {
  std::string head;  // "ddpm" or "cm"
  std::size_t k = 0;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  double median_ms = 0.0;  // robust to preemption spikes on a busy machine
  std::size_t samples = 0;
};

// Wall time of one action-map sample per K for the DDPM and CM heads on an
// untrained agent; the network sizes come from config.agent. Writes
// timing.csv when out_dir is given.
std::vector<TimingRow> run_timing(const ExperimentConfig& config, std::uint64_t seed,
                                  const std::optional<std::filesystem::path>& out_dir);

}  // namespace hydo
