#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "hydo/numerics/graph.hpp"
#include "hydo/numerics/mlp.hpp"
#include "hydo/numerics/rng.hpp"

namespace hydo {

// ---------------------------------------------------------------- schedules

struct BetaSchedule {
  std::vector<double> betas;       // betas[k-1] is beta_k, k = 1..K
  std::vector<double> alpha_bars;  // alpha_bars[k-1] = prod_{j<=k} (1 - beta_j)

  std::size_t steps() const { return betas.size(); }
  double beta(std::size_t k) const { return betas.at(k - 1); }
  bool operator==(const BetaSchedule&) const = default;
};

// Linearly spaced betas. ConfigError unless K >= 1 and 0 < min <= max < 1.
BetaSchedule make_beta_schedule(std::size_t steps, double beta_min, double beta_max);

// Consistency-model constants. Times run from t_max down toward eps; the
// last point of the Karras grid (eps itself) is dropped since denoising at
// eps is the identity.
struct ConsistencyHead {
  double eps = 0.002;
  double t_max = 2.0;
  double sigma_data = 0.5;
  std::vector<double> times;  // tau_1 = t_max > tau_2 > ... > tau_n > eps

  bool operator==(const ConsistencyHead&) const = default;
};

ConsistencyHead make_consistency_head(std::size_t steps, double eps = 0.002, double t_max = 2.0,
                                      double rho = 7.0);

double consistency_c_skip(double tau, const ConsistencyHead& head);
double consistency_c_out(double tau, const ConsistencyHead& head);
double consistency_c_in(double tau, const ConsistencyHead& head);

// c_skip(tau) * x_tau + c_out(tau) * raw. DomainError unless tau in [eps, t_max].
DenseArray consistency_parameterize(const DenseArray& raw, const DenseArray& x_tau, double tau,
                                    const ConsistencyHead& head);
Var consistency_parameterize(Graph& graph, Var raw, Var x_tau, double tau,
                             const ConsistencyHead& head);

// -------------------------------------------------------------------- chains

/// One sampled path through a policy head, recorded on a graph.
///
/// DDPM: latents a^K ... a^0 (K + 1 entries), means[i] and step_log_probs[i]
/// belong to the transition latents[i] -> latents[i + 1]. Consistency heads
/// use the same layout with the noisy draws x_tau_1 .. x_tau_n followed by
/// the final denoised sample. `action` is the last latent clipped to [-1, 1].
struct DiffusionChain {
  std::vector<Var> latents;
  std::vector<Var> means;
  std::vector<Var> step_log_probs;  // each rows x 1
  std::vector<double> variances;
  Var total;                        // rows x 1, sum of step_log_probs
  Var action;

  std::size_t transitions() const { return step_log_probs.size(); }
};

// The chain's total log-density. UsageError if the chain is incomplete.
Var chain_log_prob(const DiffusionChain& chain);

// Joins a chain ending at latent x with one starting at x.
DiffusionChain concat_chains(Graph& graph, const DiffusionChain& first, const DiffusionChain& second);

struct SampleOptions {
  // Zero noise on every reverse transition (the initial latent is still drawn).
  bool frozen_steps = false;
};

// Mean of p(a^{k-1} | a^k) given the current latent and step index k.
using MeanFn = std::function<Var(Var latent, std::size_t k)>;
// Consistency function f(x_tau, tau).
using DenoiseFn = std::function<Var(Var x_tau, double tau)>;

// Reverse transitions k_from -> k_to (k_from > k_to >= 0) starting at `start`.
DiffusionChain ddpm_steps(Graph& graph, const BetaSchedule& schedule, Var start, std::size_t k_from,
                          std::size_t k_to, const MeanFn& mean_fn, RngStream& rng,
                          const SampleOptions& options = {});

// Draws a^K ~ N(0, I) of shape rows x dim and runs all K transitions.
DiffusionChain ddpm_sample_with(Graph& graph, const BetaSchedule& schedule, std::size_t rows,
                                std::size_t dim, const MeanFn& mean_fn, RngStream& rng,
                                const SampleOptions& options = {});

// Log-density of an already sampled path under mean_fn, with the latents
// treated as data. Used to rescore stored paths.
Var ddpm_path_log_prob(Graph& graph, const BetaSchedule& schedule,
                       const std::vector<DenseArray>& latents, const MeanFn& mean_fn);

// Multistep consistency sampling. The final step's density is a Gaussian of
// variance `final_variance` evaluated at its own mean.
DiffusionChain consistency_sample_with(Graph& graph, const ConsistencyHead& head,
                                       double final_variance, std::size_t rows, std::size_t dim,
                                       const DenoiseFn& denoise, RngStream& rng);

// --------------------------------------------------------------------- heads

enum class HeadKind { ddpm, consistency, gaussian, deterministic };
// direct: the network output is the transition mean.
// residual: mean = current latent + network output.
enum class MeanForm { direct, residual };

std::string to_string(HeadKind kind);
HeadKind head_kind_from_string(const std::string& name);
std::string to_string(MeanForm form);
MeanForm mean_form_from_string(const std::string& name);

struct HeadSpec {
  HeadKind kind = HeadKind::ddpm;
  MeanForm mean_form = MeanForm::residual;
  std::size_t feature_dim = 0;
  std::size_t action_dim = 2;
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::tanh;
  std::size_t steps = 5;  // K for ddpm, inference steps for consistency
  double beta_min = 1e-4;
  double beta_max = 0.05;
  double cm_eps = 0.002;
  double cm_t_max = 2.0;
  double log_std_min = -5.0;
  double log_std_max = 2.0;
  bool zero_output = true;  // zero the last layer so the untrained head is symmetric

  bool operator==(const HeadSpec&) const = default;
};

/// A motion head: network parameters plus the sampler it drives.
///
/// Network input is [features, latent, time] for ddpm/consistency heads and
/// features alone otherwise. Output width is action_dim, or 2*action_dim
/// (mean, raw log-std) for the gaussian head.
struct PolicyHead {
  HeadSpec spec;
  BetaSchedule schedule;
  ConsistencyHead cm;
  MlpParams net;

  bool operator==(const PolicyHead&) const = default;
};

PolicyHead make_policy_head(const HeadSpec& spec, RngStream& rng);
// Rebuilds schedule and consistency constants for a spec around existing weights.
PolicyHead assemble_policy_head(const HeadSpec& spec, MlpParams net);

// Graph leaves for a head. The first layer weight is split into feature and
// latent/time rows so the feature product is computed once per chain.
struct BoundHead {
  BoundMlp mlp;
  Var w_features;
  Var w_latent;  // invalid for heads without a latent input
};

BoundHead bind_head(Graph& graph, const PolicyHead& head, bool trainable);

// features * W_features + b_1, shape rows x hidden_1.
Var project_features(Graph& graph, const PolicyHead& head, const BoundHead& bound, Var features);

// Network output for a projected feature block and an optional latent/time input.
Var head_network(Graph& graph, const PolicyHead& head, const BoundHead& bound, Var projected,
                 Var latent, double time_feature);

// Samples one chain per row of `projected` for any head kind.
DiffusionChain sample_head(Graph& graph, const PolicyHead& head, const BoundHead& bound,
                           Var projected, RngStream& rng, const SampleOptions& options = {});

// Convenience: bind, project and sample in one call.
DiffusionChain sample_head(Graph& graph, const PolicyHead& head, Var features, RngStream& rng,
                           bool trainable, const SampleOptions& options = {});

// log-density of a = tanh(u), u ~ N(mean, exp(log_std)^2), per dimension summed.
double squashed_gaussian_log_prob(const DenseArray& action, const DenseArray& mean,
                                  const DenseArray& log_std);

}  // namespace hydo
