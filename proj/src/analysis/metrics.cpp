#include "hydo/analysis/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>

#include "hydo/numerics/errors.hpp"
#include "hydo/numerics/rng.hpp"

namespace hydo {

std::size_t ModeHistogram::counted() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

ModeHistogram mode_histogram(std::span<const std::optional<int>> descriptors, std::size_t modes) {
  ModeHistogram h;
  h.counts.assign(modes, 0);
  for (const auto& d : descriptors) {
    if (!d) {
      ++h.unsolved;
      continue;
    }
    if (*d < 0 || static_cast<std::size_t>(*d) >= modes) {
      throw UsageError("behavior mode " + std::to_string(*d) + " outside [0, " + std::to_string(modes) + ")");
    }
    ++h.counts[static_cast<std::size_t>(*d)];
  }
  return h;
}

ModeHistogram mode_histogram(std::span<const EpisodeTrace> traces, const EnvConfig& config) {
  std::vector<std::optional<int>> d;
  d.reserve(traces.size());
  for (const EpisodeTrace& t : traces) d.push_back(behavior_descriptor(t, config));
  return mode_histogram(d, behavior_mode_count(config));
}

double behavior_entropy(const ModeHistogram& h) {
  if (h.modes() < 2) throw DomainError("behavior entropy needs at least 2 modes");
  const std::size_t total = h.counted();
  if (total == 0) throw DomainError("behavior entropy of an empty histogram");
  const double log_base = std::log(static_cast<double>(h.modes()));
  double entropy = 0.0;
  std::size_t occupied = 0;
  for (std::size_t c : h.counts) {
    if (c == 0) continue;
    ++occupied;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    entropy -= p * std::log(p) / log_base;
  }
  // pin the end points; roundoff would otherwise leave 1 - 1e-16 for uniform
  if (occupied == 1) return 0.0;
  if (occupied == h.modes() &&
      std::all_of(h.counts.begin(), h.counts.end(), [&](std::size_t c) { return c == h.counts.front(); })) {
    return 1.0;
  }
  return std::clamp(entropy, 0.0, 1.0);
}

double success_rate(std::size_t successes, std::size_t episodes) {
  if (episodes == 0) throw DomainError("success rate of zero episodes");
  if (successes > episodes) throw UsageError("more successes than episodes");
  return static_cast<double>(successes) / static_cast<double>(episodes);
}

double success_rate(std::span<const EpisodeTrace> traces) {
  const auto n = static_cast<std::size_t>(
      std::count_if(traces.begin(), traces.end(), [](const EpisodeTrace& t) { return t.success; }));
  return success_rate(n, traces.size());
}

double percentile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DomainError("percentile of an empty list");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("percentile rank outside [0, 1]");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

namespace {

// Mean taken about a pivot: exact for a constant list.
double pivot_mean(std::span<const double> v) {
  const double pivot = v.front();
  double sum = 0.0;
  for (double x : v) sum += x - pivot;
  return pivot + sum / static_cast<double>(v.size());
}

double sorted_iqm(const std::vector<double>& s) {
  const double lo = percentile(s, 0.25), hi = percentile(s, 0.75);
  const auto first = std::lower_bound(s.begin(), s.end(), lo);
  const auto last = std::upper_bound(s.begin(), s.end(), hi);
  return pivot_mean(std::span<const double>(&*first, static_cast<std::size_t>(last - first)));  // median is inside
}

void check_finite(std::span<const double> values) {
  for (double v : values)
    if (!std::isfinite(v)) throw DomainError("iqm input is not finite");
}

}  // namespace

double interquartile_mean(std::span<const double> values) {
  if (values.empty()) throw DomainError("iqm of an empty list");
  check_finite(values);
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  return sorted_iqm(s);
}

IqmResult iqm(std::span<const double> values, const IqmOptions& options) {
  if (values.empty()) throw DomainError("iqm of an empty list");
  if (!(options.confidence > 0.0 && options.confidence < 1.0)) throw DomainError("confidence outside (0, 1)");
  check_finite(values);
  IqmResult out;
  out.n = values.size();
  if (values.size() < 4) {
    out.degenerate = true;
    out.value = pivot_mean(values);
    out.lower = out.upper = out.value;
    return out;
  }
  out.value = interquartile_mean(values);
  if (options.resamples == 0) {
    out.lower = out.upper = out.value;
    return out;
  }
  RngStream rng = seeded_rng(options.seed).split("bootstrap");
  std::vector<double> stats(options.resamples), draw(values.size());
  for (double& stat : stats) {
    for (double& d : draw) d = values[rng.uniform_index(values.size())];
    std::sort(draw.begin(), draw.end());
    stat = sorted_iqm(draw);
  }
  std::sort(stats.begin(), stats.end());
  const double tail = 0.5 * (1.0 - options.confidence);
  out.lower = percentile(stats, tail);
  out.upper = percentile(stats, 1.0 - tail);
  return out;
}

RunReport make_run_report(const std::string& algorithm, std::uint64_t seed, std::span<const EpisodeTrace> traces,
                          const EnvConfig& config, std::span<const double> sample_ms, std::size_t k_steps) {
  RunReport r;
  r.algorithm = algorithm;
  r.seed = seed;
  r.episodes = traces.size();
  r.success_rate = success_rate(traces);
  r.k_steps = k_steps;
  if (behavior_mode_count(config) >= 2) {
    const ModeHistogram h = mode_histogram(traces, config);
    if (h.counted() > 0) r.entropy = behavior_entropy(h);
  }
  if (!sample_ms.empty()) {
    r.mean_inference_ms = std::accumulate(sample_ms.begin(), sample_ms.end(), 0.0) / static_cast<double>(sample_ms.size());
  }
  return r;
}

std::vector<ParetoRow> pareto_table(std::span<const RunReport> reports, const IqmOptions& options) {
  std::map<std::string, std::vector<const RunReport*>> groups;
  for (const RunReport& r : reports) groups[r.algorithm].push_back(&r);
  std::vector<ParetoRow> rows;
  for (const auto& [label, runs] : groups) {
    ParetoRow row;
    row.algorithm = label;
    row.runs = runs.size();
    std::vector<double> entropy, success;
    for (const RunReport* r : runs) {
      success.push_back(r->success_rate);
      if (r->entropy) entropy.push_back(*r->entropy);
    }
    row.success_rate = iqm(success, options);
    if (!entropy.empty()) row.entropy = iqm(entropy, options);
    rows.push_back(std::move(row));
  }
  return rows;
}

// ------------------------------------------------------------------ csv

std::string format_number(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

std::string fmt(double v) { return format_number(v); }

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) return out;
    start = comma + 1;
  }
}

struct LineParser {
  const std::string& source;
  std::size_t line;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(source + ":" + std::to_string(line) + ": " + what);
  }

  double number(const std::string& field, const char* column) const {
    double v = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (field.empty() || res.ec != std::errc() || res.ptr != field.data() + field.size() || !std::isfinite(v)) {
      fail(std::string("column ") + column + ": not a number: '" + field + "'");
    }
    return v;
  }

  std::uint64_t count(const std::string& field, const char* column) const {
    std::uint64_t v = 0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (field.empty() || res.ec != std::errc() || res.ptr != field.data() + field.size()) {
      fail(std::string("column ") + column + ": not a nonnegative integer: '" + field + "'");
    }
    return v;
  }
};

void check_label(const std::string& label) {
  if (label.empty() || label.find_first_of(",\n\r\"") != std::string::npos) {
    throw UsageError("algorithm label '" + label + "' cannot be written as a csv field");
  }
}

}  // namespace

void write_reports_csv(std::ostream& out, std::span<const RunReport> reports) {
  out << kReportHeader << '\n';
  for (const RunReport& r : reports) {
    check_label(r.algorithm);
    out << r.algorithm << ',' << r.seed << ',' << (r.entropy ? fmt(*r.entropy) : "") << ',' << fmt(r.success_rate)
        << ',' << r.episodes << ',' << fmt(r.mean_inference_ms) << ',' << r.k_steps << '\n';
  }
}

std::vector<RunReport> read_reports_csv(std::istream& in, const std::string& source) {
  std::vector<RunReport> out;
  std::string line;
  LineParser p{source, 1};
  if (!std::getline(in, line)) p.fail("missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kReportHeader) p.fail(std::string("header must be '") + kReportHeader + "'");
  while (std::getline(in, line)) {
    ++p.line;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split_fields(line);
    if (f.size() != 7) p.fail("expected 7 fields, got " + std::to_string(f.size()));
    RunReport r;
    r.algorithm = f[0];
    if (r.algorithm.empty()) p.fail("column algorithm: empty");
    r.seed = p.count(f[1], "seed");
    if (!f[2].empty()) {
      r.entropy = p.number(f[2], "entropy");
      if (*r.entropy < 0.0 || *r.entropy > 1.0) p.fail("column entropy: outside [0, 1]");
    }
    r.success_rate = p.number(f[3], "success_rate");
    if (r.success_rate < 0.0 || r.success_rate > 1.0) p.fail("column success_rate: outside [0, 1]");
    r.episodes = p.count(f[4], "episodes");
    r.mean_inference_ms = p.number(f[5], "mean_inference_ms");
    r.k_steps = p.count(f[6], "K");
    out.push_back(std::move(r));
  }
  return out;
}

void write_pareto_csv(std::ostream& out, std::span<const ParetoRow> rows) {
  out << kParetoHeader << '\n';
  for (const ParetoRow& r : rows) {
    check_label(r.algorithm);
    out << r.algorithm << ',' << r.runs << ',';
    if (r.entropy) {
      out << fmt(r.entropy->value) << ',' << fmt(r.entropy->lower) << ',' << fmt(r.entropy->upper);
    } else {
      out << ",,";
    }
    out << ',' << fmt(r.success_rate.value) << ',' << fmt(r.success_rate.lower) << ',' << fmt(r.success_rate.upper)
        << '\n';
  }
}

}  // namespace hydo
