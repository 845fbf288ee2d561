#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hydo/envs/push_env.hpp"

namespace hydo {

// Episode counts per behavior mode. Unsolved episodes (no descriptor) are kept
// out of the counts and tallied separately.
struct ModeHistogram {
  std::vector<std::size_t> counts;  // one slot per mode, |B| = counts.size()
  std::size_t unsolved = 0;

  std::size_t counted() const;
  std::size_t modes() const { return counts.size(); }
};

// UsageError for a descriptor outside [0, modes).
ModeHistogram mode_histogram(std::span<const std::optional<int>> descriptors, std::size_t modes);
ModeHistogram mode_histogram(std::span<const EpisodeTrace> traces, const EnvConfig& config);

// -sum p log_|B| p, 0 log 0 = 0. DomainError when |B| < 2 or nothing counted.
double behavior_entropy(const ModeHistogram& histogram);

// DomainError for zero episodes.
double success_rate(std::size_t successes, std::size_t episodes);
double success_rate(std::span<const EpisodeTrace> traces);

// Linear interpolation between order statistics at position q * (n - 1).
// `sorted` must be ascending and nonempty.
double percentile(std::span<const double> sorted, double q);

struct IqmResult {
  double value = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::size_t n = 0;
  bool degenerate = false;  // fewer than 4 values: plain mean, zero-width interval
};

struct IqmOptions {
  double confidence = 0.95;
  std::size_t resamples = 2000;
  std::uint64_t seed = 0;
};

// Mean of the values inside [p25, p75], bounds inclusive.
double interquartile_mean(std::span<const double> values);
// Point estimate plus a percentile-bootstrap interval. DomainError when empty.
IqmResult iqm(std::span<const double> values, const IqmOptions& options = {});

struct RunReport {
  std::string algorithm;
  std::uint64_t seed = 0;
  std::optional<double> entropy;  // absent when no episode was solved or the task has no modes
  double success_rate = 0.0;
  std::size_t episodes = 0;
  double mean_inference_ms = 0.0;
  std::size_t k_steps = 0;

  bool operator==(const RunReport&) const = default;
};

RunReport make_run_report(const std::string& algorithm, std::uint64_t seed, std::span<const EpisodeTrace> traces,
                          const EnvConfig& config, std::span<const double> sample_ms, std::size_t k_steps);

struct ParetoRow {
  std::string algorithm;
  std::size_t runs = 0;
  std::optional<IqmResult> entropy;  // over runs that have one
  IqmResult success_rate;
};

// One row per algorithm, sorted by label (byte order).
std::vector<ParetoRow> pareto_table(std::span<const RunReport> reports, const IqmOptions& options = {});

inline constexpr const char* kReportHeader = "algorithm,seed,entropy,success_rate,episodes,mean_inference_ms,K";
inline constexpr const char* kParetoHeader =
    "algorithm,runs,entropy,entropy_lo,entropy_hi,success_rate,success_rate_lo,success_rate_hi";

// Shortest text that reads back to the same double.
std::string format_number(double value);

void write_reports_csv(std::ostream& out, std::span<const RunReport> reports);
// ParseError naming `source` and the 1-based line.
std::vector<RunReport> read_reports_csv(std::istream& in, const std::string& source);
void write_pareto_csv(std::ostream& out, std::span<const ParetoRow> rows);

}  // namespace hydo
