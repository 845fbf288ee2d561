// Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//
//   acceptance              fast criteria; the training-heavy ones print SKIP
//   acceptance --long       everything (hours on one core)
//   acceptance --only NAME  selected criteria, repeatable
//
// Exit status is 1 if any selected criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hydo/analysis/metrics.hpp"
#include "hydo/diffusion/policy_head.hpp"
#include "hydo/harness/commands.hpp"
#include "hydo/hybrid/hybrid_agent.hpp"
#include "hydo/hybrid/trainer.hpp"
#include "hydo/sac/soft_actor_critic.hpp"
#include "support/gradcheck.hpp"
#include "support/params.hpp"
#include "support/tabular_mdp.hpp"

namespace fs = std::filesystem;
using namespace hydo;
using testing::flatten;
using testing::randn;
using testing::unflatten;

namespace {

enum class Status { pass, fail, skip };

struct Outcome {
  Status status = Status::fail;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Status::pass : Status::fail, std::move(detail)}; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Context {
  fs::path configs;
  fs::path out;
};

// ----------------------------------------------------------------- gradients

constexpr int kGradSeeds = 20;
constexpr double kGradTol = 1e-4;

double critic_fd(std::uint64_t seed) {
  RngStream rng = seeded_rng(7000 + seed);
  const std::vector<std::size_t> widths{3, 6, 1};
  const CriticPair c = make_critic_pair(widths, Activation::tanh, rng, {}, 0.005);
  const DenseArray x = randn(4, 3, rng), y = randn(4, 1, rng);
  auto loss_of = [&](Graph& g, const MlpParams& q1, const MlpParams& q2, const BoundMlp& b1, const BoundMlp& b2) {
    const Var in = g.constant(x);
    return critic_loss(g, mlp_forward(g, q1, b1, in), mlp_forward(g, q2, b2, in), y);
  };
  Graph g;
  const BoundMlp b1 = bind_parameters(g, c.q1), b2 = bind_parameters(g, c.q2);
  const Gradients grads = g.backward(loss_of(g, c.q1, c.q2, b1, b2));
  std::vector<DenseArray> flat = flatten(c.q1), analytic = flatten(gradients_of(grads, b1, c.q1));
  const std::size_t n1 = flat.size();
  for (auto& a : flatten(c.q2)) flat.push_back(a);
  for (auto& a : flatten(gradients_of(grads, b2, c.q2))) analytic.push_back(a);
  auto eval = [&](const std::vector<DenseArray>& p) {
    const MlpParams q1 = unflatten(c.q1, p), q2 = unflatten(c.q2, p, n1);
    Graph h;
    return h.value(loss_of(h, q1, q2, bind_parameters(h, q1), bind_parameters(h, q2))).item();
  };
  return testing::check_gradients(eval, flat, analytic).max_relative_error;
}

// Random direct-mean DDPM head whose a^0 stays inside the clip band, so the
// loss is smooth in the weights.
PolicyHead fd_head(std::size_t k, RngStream& rng) {
  HeadSpec spec;
  spec.feature_dim = 3;
  spec.hidden = {6};
  spec.steps = k;
  spec.beta_min = spec.beta_max = 0.04;
  spec.mean_form = MeanForm::direct;
  spec.zero_output = false;
  PolicyHead head = make_policy_head(spec, rng);
  for (double& w : head.net.layers.back().weight.values()) w *= 0.3;
  return head;
}

// points == 0: plain diffusion actor loss over rows; otherwise the hybrid
// per-point loss with rows grouped `points` at a time. A draw whose pre-clip
// action leaves the band sits on the clip's kink, where a central difference
// means nothing; it is redrawn and counted in `redraws`.
double actor_fd(std::uint64_t seed, std::size_t k, std::size_t points, int& redraws) {
  const RngStream base = seeded_rng((points ? 8000 : 9000) + 31 * seed + k);
  for (std::uint64_t attempt = 0;; ++attempt) {
    RngStream rng = base.split("attempt", attempt);
    const PolicyHead head = fd_head(k, rng);
    const std::vector<std::size_t> qw{5, 6, 1};
    const MlpParams critic = make_mlp(qw, Activation::tanh, Activation::identity, rng);
    const std::size_t rows = 4;
    const DenseArray features = randn(rows, 3, rng, 0.3);
    const DenseArray mask(points ? rows / points : 1, points ? points : 1, 1.0);
    const std::uint64_t noise_seed = rng.next_u64();
    auto loss_of = [&](Graph& g, const PolicyHead& h, const BoundHead& bound) {
      RngStream noise = seeded_rng(noise_seed);
      const Var f = g.constant(features);
      const DiffusionChain c = sample_head(g, h, bound, project_features(g, h, bound, f), noise);
      const Var q = mlp_forward(g, critic, bind_constants(g, critic), g.concat_cols({f, c.action}));
      const Var loss = points ? hydo_actor_loss(g, q, chain_log_prob(c), mask, 1.5, 0.2, 0.3).loss
                              : actor_loss_diffusion(g, q, chain_log_prob(c), 0.3);
      return std::pair{loss, c.latents.back()};
    };
    Graph g;
    const BoundHead bound = bind_head(g, head, true);
    const auto [loss, pre_clip] = loss_of(g, head, bound);
    const auto& a = g.value(pre_clip).values();
    if (std::any_of(a.begin(), a.end(), [](double v) { return std::abs(v) >= 0.99; })) {
      ++redraws;
      continue;
    }
    const auto analytic = flatten(gradients_of(g.backward(loss), bound.mlp, head.net));
    auto eval = [&](const std::vector<DenseArray>& p) {
      PolicyHead h = head;
      h.net = unflatten(h.net, p);
      Graph hg;
      return hg.value(loss_of(hg, h, bind_head(hg, h, true)).first).item();
    };
    return testing::check_gradients(eval, flatten(head.net), analytic).max_relative_error;
  }
}

double temperature_fd(std::uint64_t seed) {
  RngStream rng = seeded_rng(6000 + seed);
  const double logp = rng.uniform(-5, 5), target = rng.uniform(-3, 3);
  const std::vector<DenseArray> p{DenseArray::scalar(rng.uniform(-2, 2))};
  Graph g;
  const Var leaf = g.parameter(p[0]);
  const std::vector<DenseArray> analytic{g.backward(temperature_loss(g, leaf, logp, target)).wrt(leaf)};
  auto eval = [&](const std::vector<DenseArray>& q) {
    Graph h;
    return h.value(temperature_loss(h, h.parameter(q[0]), logp, target)).item();
  };
  return testing::check_gradients(eval, p, analytic).max_relative_error;
}

Outcome gradient_correctness(const Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  struct Family {
    std::string name;
    double worst = 0.0;
    int runs = 0;
    int redraws = 0;
  };
  std::vector<Family> fam{{"critic"}, {"diffusion K=1..3"}, {"hybrid N=2 K=1..3"}, {"temperature"}};
  auto note = [](Family& f, double e) {
    f.worst = std::isnan(e) || std::isnan(f.worst) ? std::nan("") : std::max(f.worst, e);
    ++f.runs;
  };
  for (int s = 0; s < kGradSeeds; ++s) {
    note(fam[0], critic_fd(s));
    for (std::size_t k = 1; k <= 3; ++k) note(fam[1], actor_fd(s, k, 0, fam[1].redraws));
    for (std::size_t k = 1; k <= 3; ++k) note(fam[2], actor_fd(s, k, 2, fam[2].redraws));
    note(fam[3], temperature_fd(s));
  }
  const double secs = seconds_since(t0);
  bool ok = secs < 120.0;
  std::string d;
  for (const Family& f : fam) {
    ok = ok && f.worst < kGradTol;  // NaN compares false
    d += f.name + " " + fmt("%.2e", f.worst) + " (" + std::to_string(f.runs) + " runs";
    if (f.redraws) d += ", " + std::to_string(f.redraws) + " redrawn off the clip";
    d += "); ";
  }
  return verdict(ok, "max rel err " + d + fmt("%.1f s", secs) + " [tol 1e-4, < 120 s]");
}

// ------------------------------------------------------------------ tabular

Outcome tabular_soft_evaluation(const Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  const testing::TabularMdp m;
  const auto oracle = testing::soft_q_oracle(m);
  double worst = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) worst = std::max(worst, testing::max_abs_difference(testing::train_tabular_critic(m, seed, 4000), oracle));
  const double secs = seconds_since(t0);
  return verdict(worst < 1e-2 && secs < 60.0,
                 "max |Q - Q_soft| " + fmt("%.2e", worst) + " over 3 seeds, " + fmt("%.1f s", secs) + " [tol 1e-2, < 60 s]");
}

// ----------------------------------------------------------------- location

Outcome location_policy_properties(const Context&) {
  RngStream rng = seeded_rng(12);
  double sum_err = 0.0, shift_err = 0.0, background = 0.0;
  bool uniform_exact = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(31);
    DenseArray q(1, n), mask(1, n, 0.0);
    for (double& v : q.values()) v = rng.uniform(-20.0, 20.0);
    for (std::size_t i = 0; i < n; ++i) mask[i] = rng.uniform() < 0.6 ? 1.0 : 0.0;
    mask[rng.uniform_index(n)] = 1.0;
    const double beta = rng.uniform(0.1, 5.0);
    const DenseArray p = location_policy(q, mask, beta);
    DenseArray shifted = q;
    const double c = rng.uniform(-100.0, 100.0);
    for (double& v : shifted.values()) v += c;
    const DenseArray ps = location_policy(shifted, mask, beta);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += p[i];
      shift_err = std::max(shift_err, std::abs(p[i] - ps[i]));
      if (mask[i] == 0.0) background = std::max(background, std::abs(p[i]));
    }
    sum_err = std::max(sum_err, std::abs(total - 1.0));

    const DenseArray flat = location_policy(DenseArray(1, n, q[0]), mask, beta);
    const double objects = std::accumulate(mask.values().begin(), mask.values().end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      if (mask[i] != 0.0 && flat[i] != 1.0 / objects) uniform_exact = false;
  }
  const DenseArray two = location_policy(DenseArray::row({1.0, 0.0}), DenseArray(1, 2, 1.0), 1.0);
  const double anchor = std::max(std::abs(two[0] - 0.7311), std::abs(two[1] - 0.2689));
  const bool ok = sum_err <= 1e-9 && background == 0.0 && shift_err <= 1e-9 && uniform_exact && anchor <= 1e-4;
  return verdict(ok, "1000 random rows: |sum-1| " + fmt("%.1e", sum_err) + ", background mass " + fmt("%.1e", background) +
                         ", shift diff " + fmt("%.1e", shift_err) + ", equal-Q uniform " + (uniform_exact ? "exact" : "NOT exact") +
                         "; beta=1 Q=[1,0] -> [" + fmt("%.6f", two[0]) + ", " + fmt("%.6f", two[1]) + "]");
}

// --------------------------------------------------------------- consistency

Outcome consistency_boundary(const Context&) {
  RngStream rng = seeded_rng(31);
  HeadSpec spec;
  spec.kind = HeadKind::consistency;
  spec.feature_dim = 3;
  spec.hidden = {16, 16};
  spec.steps = 2;
  spec.zero_output = false;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    RngStream wrng = rng.split("weights", trial);
    const PolicyHead head = make_policy_head(spec, wrng);
    Graph g;
    const BoundHead bound = bind_head(g, head, true);
    const Var proj = project_features(g, head, bound, g.constant(randn(2, 3, rng)));
    const Var x = g.constant(randn(2, 2, rng, 2.0));
    const double eps = head.cm.eps;
    const Var raw = head_network(g, head, bound, proj, g.scale(x, consistency_c_in(eps, head.cm)), 0.25 * std::log(eps));
    const DenseArray out = g.value(consistency_parameterize(g, raw, x, eps, head.cm));
    const DenseArray& xv = g.value(x);
    for (std::size_t i = 0; i < out.size(); ++i) worst = std::max(worst, std::abs(out[i] - xv[i]));
  }
  return verdict(worst == 0.0, "1000 random (x, theta): max |f(x, eps) - x| = " + fmt("%.3g", worst));
}

// ------------------------------------------------------------------ entropy

Outcome entropy_anchors(const Context&) {
  bool ok = true;
  std::string d;
  for (std::size_t modes : {2u, 24u}) {
    ModeHistogram single{std::vector<std::size_t>(modes, 0)};
    single.counts[modes / 2] = 500;
    ModeHistogram uniform{std::vector<std::size_t>(modes, 7)};
    const double h0 = behavior_entropy(single), h1 = behavior_entropy(uniform);
    ok = ok && h0 == 0.0 && h1 == 1.0;
    d += "|B|=" + std::to_string(modes) + ": single " + fmt("%.17g", h0) + ", uniform " + fmt("%.17g", h1) + "; ";
  }
  return verdict(ok, d);
}

// ------------------------------------------------------------------- timing

Outcome timing_linear_in_k(const Context& ctx) {
  const ExperimentConfig cfg = load_experiment_config(ctx.configs / "timing.json");
  const auto rows = run_timing(cfg, cfg.seeds.front(), std::nullopt);
  bool ok = true;
  std::string d;
  for (const char* head : {"ddpm", "cm"}) {
    double t5 = 0.0, t50 = 0.0;
    for (const TimingRow& r : rows) {
      if (r.head != head) continue;
      if (r.k == 5) t5 = r.median_ms;
      if (r.k == 50) t50 = r.median_ms;
    }
    const double ratio = t5 > 0.0 ? t50 / t5 : 0.0;
    ok = ok && ratio >= 6.0 && ratio <= 14.0;
    d += std::string(head) + " " + fmt("%.4f", t5) + " -> " + fmt("%.4f", t50) + " ms, ratio " + fmt("%.2f", ratio) + "; ";
  }
  return verdict(ok, d + "[median per-sample time, ratio in [6, 14]]");
}

// -------------------------------------------------------------- determinism

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism_resume(const Context& ctx) {
  ExperimentConfig c = load_experiment_config(ctx.configs / "bimodal_hydo.json");
  c.agent.warmup = 100;
  c.agent.batch_size = 16;
  c.steps = 400;
  c.eval_every = 200;
  c.eval_episodes = 5;
  c.checkpoint_every = 100;
  const fs::path root = ctx.out / "determinism";
  fs::remove_all(root);
  const std::uint64_t seed = 3;
  run_train(c, seed, root / "a");
  run_train(c, seed, root / "b");
  const bool same = slurp(root / "a" / kMetricsFile) == slurp(root / "b" / kMetricsFile) &&
                    slurp(root / "a" / kLatestCheckpoint) == slurp(root / "b" / kLatestCheckpoint);

  // stop after 250 steps, roll back to the step-200 checkpoint, resume to 400
  ExperimentConfig part = c;
  part.steps = 200;
  run_train(part, seed, root / "r200");
  part.steps = 250;
  run_train(part, seed, root / "r");
  fs::copy_file(root / "r200" / kLatestCheckpoint, root / "r" / kLatestCheckpoint, fs::copy_options::overwrite_existing);
  run_train(c, seed, root / "r", true);
  const bool resumed = slurp(root / "r" / kMetricsFile) == slurp(root / "a" / kMetricsFile) &&
                       slurp(root / "r" / kLatestCheckpoint) == slurp(root / "a" / kLatestCheckpoint);
  fs::remove_all(root);
  return verdict(same && resumed, std::string("same seed metrics+checkpoint ") + (same ? "bit-identical" : "DIFFER") +
                                      "; resume at 200 of 400 " + (resumed ? "bit-identical" : "DIFFERS") +
                                      " to the straight run");
}

// ------------------------------------------------------------ long criteria

struct TrainedRun {
  fs::path dir;
  double seconds = 0.0;
};

TrainedRun train_fresh(const ExperimentConfig& c, std::uint64_t seed, const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::remove_all(dir);
  run_train(c, seed, dir);
  return {dir, seconds_since(t0)};
}

Outcome diversity_ordering(const Context& ctx) {
  ExperimentConfig c = load_experiment_config(ctx.configs / "push_line_24.json");
  bool ok = true;
  std::string d;
  for (Algorithm algo : {Algorithm::hydo, Algorithm::hacman}) {
    c.agent.algorithm = algo;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> values;
    std::string per_seed;
    for (std::uint64_t seed : c.seeds) {
      const TrainedRun run = train_fresh(c, seed, ctx.out / "diversity" / to_string(algo) / ("seed_" + std::to_string(seed)));
      const EvalOutcome e = run_eval(run.dir / kLatestCheckpoint, c.env, 500, c.eval_seed, run.dir / "eval");
      // no solved episode leaves the entropy undefined; that cannot satisfy either bound
      const double h = e.report.entropy.value_or(std::nan(""));
      values.push_back(h);
      per_seed += fmt(" %.3f", h) + fmt("/%.2f", e.report.success_rate);
    }
    const double secs = seconds_since(t0);
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    const bool method_ok = (algo == Algorithm::hydo ? mean >= 0.3 : mean <= 0.1) && secs <= 1800.0;
    ok = ok && method_ok;
    d += to_string(algo) + " entropy " + fmt("%.3f", mean) + (algo == Algorithm::hydo ? " (>= 0.3)" : " (<= 0.1)") +
         " seeds [entropy/success]" + per_seed + ", " + fmt("%.0f s", secs) + "; ";
  }
  return verdict(ok, d + "[500 eval episodes per seed, <= 1800 s per method]");
}

Outcome multimodality(const Context& ctx) {
  ExperimentConfig c = load_experiment_config(ctx.configs / "bimodal_hydo.json");
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t seed = c.seeds.front();
  std::string d;
  double diffusion_min = 0.0, gaussian_max = 0.0;
  for (Algorithm algo : {Algorithm::hydo, Algorithm::hydo_nodiff}) {
    c.agent.algorithm = algo;
    const TrainedRun run = train_fresh(c, seed, ctx.out / "multimodality" / to_string(algo));
    const Trainer t = Trainer::get(Archive::load(run.dir / kLatestCheckpoint));
    const auto counts = push_mode_counts(t.agent(), c.env, 10000, c.eval_seed);
    const double up = static_cast<double>(counts[0]) / 1e4;
    if (algo == Algorithm::hydo) diffusion_min = std::min(up, 1.0 - up);
    else gaussian_max = std::max(up, 1.0 - up);
    d += to_string(algo) + " up/down " + fmt("%.3f", up) + "/" + fmt("%.3f", 1.0 - up) + " (" + fmt("%.0f s", run.seconds) + "); ";
  }
  const double secs = seconds_since(t0);
  return verdict(diffusion_min >= 0.2 && gaussian_max >= 0.95 && secs <= 900.0,
                 d + "[1e4 draws; diffusion each mode >= 0.2, gaussian one mode >= 0.95, " + fmt("%.0f s", secs) + " <= 900 s]");
}

Outcome end_to_end_align(const Context& ctx) {
  const ExperimentConfig c = load_experiment_config(ctx.configs / "align_se2.json");
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> rates;
  std::string per_seed;
  for (std::uint64_t seed : c.seeds) {
    const TrainedRun run = train_fresh(c, seed, ctx.out / "align_se2" / ("seed_" + std::to_string(seed)));
    const EvalOutcome e = run_eval(run.dir / kLatestCheckpoint, c.env, c.eval_episodes, c.eval_seed, run.dir / "eval");
    rates.push_back(e.report.success_rate);
    per_seed += fmt(" %.2f", e.report.success_rate);
  }
  const double secs = seconds_since(t0);
  const IqmResult r = iqm(rates);
  return verdict(r.value >= 0.8 && secs <= 7200.0 && c.steps <= 50000,
                 "IQM success " + fmt("%.3f", r.value) + " [" + fmt("%.3f", r.lower) + ", " + fmt("%.3f", r.upper) + "] over " +
                     std::to_string(rates.size()) + " seeds (" + per_seed + " ) after " + std::to_string(c.steps) + " steps, " +
                     fmt("%.0f s", secs) + " [>= 0.8, <= 7200 s]");
}

struct Criterion {
  std::string name;
  bool slow;
  std::function<Outcome(const Context&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  bool slow = false;
  std::vector<std::string> only;
  std::string configs = HYDO_CONFIG_DIR;
  std::string out = "acceptance_runs";
  app.add_flag("--long", slow, "include the training-heavy criteria");
  app.add_option("--only", only, "run just these criteria");
  app.add_option("--configs", configs, "experiment config directory")->capture_default_str();
  app.add_option("--out", out, "scratch and run output directory")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {"gradient_correctness", false, gradient_correctness},
      {"tabular_soft_evaluation", false, tabular_soft_evaluation},
      {"location_policy", false, location_policy_properties},
      {"consistency_boundary", false, consistency_boundary},
      {"entropy_anchors", false, entropy_anchors},
      {"diversity_ordering", true, diversity_ordering},
      {"multimodality", true, multimodality},
      {"end_to_end_align_se2", true, end_to_end_align},
      {"timing_linear_in_k", false, timing_linear_in_k},
      {"determinism_resume", false, determinism_resume},
  };
  for (const std::string& name : only) {
    if (std::none_of(criteria.begin(), criteria.end(), [&](const Criterion& c) { return c.name == name; })) {
      std::fprintf(stderr, "unknown criterion %s\n", name.c_str());
      return 2;
    }
  }

  const Context ctx{configs, out};
  fs::create_directories(ctx.out);
  int failures = 0;
  for (const Criterion& c : criteria) {
    const bool selected = only.empty() || std::find(only.begin(), only.end(), c.name) != only.end();
    if (!selected) continue;
    Outcome o;
    if (c.slow && !slow && only.empty()) {
      o = {Status::skip, "training run; use --long or --only " + c.name};
    } else {
      try {
        o = c.run(ctx);
      } catch (const std::exception& e) {
        o = {Status::fail, std::string("exception: ") + e.what()};
      }
    }
    const char* tag = o.status == Status::pass ? "PASS" : o.status == Status::fail ? "FAIL" : "SKIP";
    failures += o.status == Status::fail;
    std::printf("%s %s: %s\n", tag, c.name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
