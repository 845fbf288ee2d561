#include "hydo/diffusion/policy_head.hpp"

#include <cmath>
#include <numbers>

#include "hydo/numerics/errors.hpp"

namespace hydo {

BetaSchedule make_beta_schedule(std::size_t steps, double beta_min, double beta_max) {
  if (steps < 1) throw ConfigError("beta schedule needs K >= 1");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
    throw ConfigError("beta schedule needs 0 < beta_min <= beta_max < 1");
  }
  BetaSchedule s;
  double alpha_bar = 1.0;
  for (std::size_t k = 0; k < steps; ++k) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(steps - 1);
    const double beta = beta_min + frac * (beta_max - beta_min);
    alpha_bar *= 1.0 - beta;
    s.betas.push_back(beta);
    s.alpha_bars.push_back(alpha_bar);
  }
  return s;
}

ConsistencyHead make_consistency_head(std::size_t steps, double eps, double t_max, double rho) {
  if (steps < 1) throw ConfigError("consistency head needs at least one step");
  if (!(eps > 0.0 && eps < t_max)) throw ConfigError("consistency head needs 0 < eps < t_max");
  ConsistencyHead head;
  head.eps = eps;
  head.t_max = t_max;
  const double a = std::pow(t_max, 1.0 / rho), b = std::pow(eps, 1.0 / rho);
  for (std::size_t i = 0; i < steps; ++i) {
    const double frac = static_cast<double>(i) / static_cast<double>(steps);
    head.times.push_back(std::pow(a + frac * (b - a), rho));
  }
  head.times.front() = t_max;
  return head;
}

double consistency_c_skip(double tau, const ConsistencyHead& head) {
  const double sd2 = head.sigma_data * head.sigma_data;
  const double d = tau - head.eps;
  return sd2 / (d * d + sd2);
}

double consistency_c_out(double tau, const ConsistencyHead& head) {
  const double sd = head.sigma_data;
  return sd * (tau - head.eps) / std::sqrt(sd * sd + tau * tau);
}

double consistency_c_in(double tau, const ConsistencyHead& head) {
  return 1.0 / std::sqrt(tau * tau + head.sigma_data * head.sigma_data);
}

namespace {

void check_tau(double tau, const ConsistencyHead& head) {
  if (!(tau >= head.eps && tau <= head.t_max)) {
    throw DomainError("consistency time " + std::to_string(tau) + " outside [eps, t_max]");
  }
}

DenseArray gaussian_noise(std::size_t rows, std::size_t cols, double scale, RngStream& rng) {
  DenseArray z(rows, cols);
  for (double& x : z.values()) x = scale * rng.normal();
  return z;
}

Var zeros_column(Graph& graph, std::size_t rows) { return graph.constant(DenseArray(rows, 1, 0.0)); }

void finish(Graph& graph, DiffusionChain& chain) {
  const std::size_t rows = graph.value(chain.latents.front()).rows();
  chain.total = zeros_column(graph, rows);
  for (Var lp : chain.step_log_probs) chain.total = graph.add(chain.total, lp);
  chain.action = graph.clip_st(chain.latents.back(), -1.0, 1.0);
}

}  // namespace

DenseArray consistency_parameterize(const DenseArray& raw, const DenseArray& x_tau, double tau,
                                    const ConsistencyHead& head) {
  check_tau(tau, head);
  if (!raw.same_shape(x_tau)) throw UsageError("consistency_parameterize: shape mismatch");
  const double cs = consistency_c_skip(tau, head), co = consistency_c_out(tau, head);
  DenseArray out = x_tau;
  // At tau = eps, c_out is exactly 0 and c_skip exactly 1, so out == x_tau bitwise.
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cs * x_tau[i] + co * raw[i];
  return out;
}

Var consistency_parameterize(Graph& graph, Var raw, Var x_tau, double tau, const ConsistencyHead& head) {
  check_tau(tau, head);
  return graph.add(graph.scale(x_tau, consistency_c_skip(tau, head)),
                   graph.scale(raw, consistency_c_out(tau, head)));
}

Var chain_log_prob(const DiffusionChain& chain) {
  if (!chain.total.valid() || chain.latents.empty() ||
      chain.latents.size() != chain.step_log_probs.size() + 1) {
    throw UsageError("chain_log_prob: incomplete chain");
  }
  return chain.total;
}

DiffusionChain concat_chains(Graph& graph, const DiffusionChain& first, const DiffusionChain& second) {
  chain_log_prob(first);
  chain_log_prob(second);
  if (!(first.latents.back() == second.latents.front())) {
    throw UsageError("concat_chains: second chain does not start where the first ends");
  }
  DiffusionChain out = first;
  out.latents.insert(out.latents.end(), second.latents.begin() + 1, second.latents.end());
  out.means.insert(out.means.end(), second.means.begin(), second.means.end());
  out.step_log_probs.insert(out.step_log_probs.end(), second.step_log_probs.begin(),
                            second.step_log_probs.end());
  out.variances.insert(out.variances.end(), second.variances.begin(), second.variances.end());
  out.total = graph.add(first.total, second.total);
  out.action = second.action;
  return out;
}

DiffusionChain ddpm_steps(Graph& graph, const BetaSchedule& schedule, Var start, std::size_t k_from,
                          std::size_t k_to, const MeanFn& mean_fn, RngStream& rng,
                          const SampleOptions& options) {
  if (!(k_from > k_to && k_from <= schedule.steps())) throw UsageError("ddpm_steps: bad step range");
  const std::size_t rows = graph.value(start).rows(), dim = graph.value(start).cols();
  DiffusionChain chain;
  chain.latents.push_back(start);
  Var x = start;
  for (std::size_t k = k_from; k > k_to; --k) {
    try {
      const double beta = schedule.beta(k);
      const Var mean = mean_fn(x, k);
      const Var noise = graph.constant(options.frozen_steps ? DenseArray(rows, dim, 0.0)
                                                            : gaussian_noise(rows, dim, std::sqrt(beta), rng));
      x = graph.add(mean, noise);
      chain.means.push_back(mean);
      chain.latents.push_back(x);
      chain.step_log_probs.push_back(graph.gaussian_log_prob(x, mean, beta));
      chain.variances.push_back(beta);
    } catch (const NumericFault& e) {
      throw NumericFault("sampling fault at diffusion step " + std::to_string(k) + ": " + e.what());
    }
  }
  finish(graph, chain);
  return chain;
}

DiffusionChain ddpm_sample_with(Graph& graph, const BetaSchedule& schedule, std::size_t rows,
                                std::size_t dim, const MeanFn& mean_fn, RngStream& rng,
                                const SampleOptions& options) {
  const Var start = graph.constant(gaussian_noise(rows, dim, 1.0, rng));
  return ddpm_steps(graph, schedule, start, schedule.steps(), 0, mean_fn, rng, options);
}

Var ddpm_path_log_prob(Graph& graph, const BetaSchedule& schedule, const std::vector<DenseArray>& latents,
                       const MeanFn& mean_fn) {
  const std::size_t K = schedule.steps();
  if (latents.size() != K + 1) throw UsageError("ddpm_path_log_prob: expected K + 1 latents");
  Var total = zeros_column(graph, latents.front().rows());
  for (std::size_t i = 0; i < K; ++i) {
    const std::size_t k = K - i;
    const Var mean = mean_fn(graph.constant(latents[i]), k);
    total = graph.add(total, graph.gaussian_log_prob(graph.constant(latents[i + 1]), mean, schedule.beta(k)));
  }
  return total;
}

DiffusionChain consistency_sample_with(Graph& graph, const ConsistencyHead& head, double final_variance,
                                       std::size_t rows, std::size_t dim, const DenoiseFn& denoise,
                                       RngStream& rng) {
  if (head.times.empty()) throw UsageError("consistency head has no inference times");
  DiffusionChain chain;
  Var x = graph.constant(gaussian_noise(rows, dim, head.t_max, rng));
  chain.latents.push_back(x);
  Var denoised;
  for (std::size_t i = 0; i < head.times.size(); ++i) {
    const double tau = head.times[i];
    try {
      if (i > 0) {
        const double var = tau * tau - head.eps * head.eps;
        x = graph.add(denoised, graph.constant(gaussian_noise(rows, dim, std::sqrt(var), rng)));
        chain.means.push_back(denoised);
        chain.latents.push_back(x);
        chain.step_log_probs.push_back(graph.gaussian_log_prob(x, denoised, var));
        chain.variances.push_back(var);
      }
      denoised = denoise(x, tau);
    } catch (const NumericFault& e) {
      throw NumericFault("sampling fault at consistency step " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  chain.means.push_back(denoised);
  chain.latents.push_back(denoised);
  chain.step_log_probs.push_back(graph.gaussian_log_prob(denoised, denoised, final_variance));
  chain.variances.push_back(final_variance);
  finish(graph, chain);
  return chain;
}

std::string to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::ddpm: return "ddpm";
    case HeadKind::consistency: return "consistency";
    case HeadKind::gaussian: return "gaussian";
    case HeadKind::deterministic: return "deterministic";
  }
  return "ddpm";
}

HeadKind head_kind_from_string(const std::string& name) {
  if (name == "ddpm") return HeadKind::ddpm;
  if (name == "consistency") return HeadKind::consistency;
  if (name == "gaussian") return HeadKind::gaussian;
  if (name == "deterministic") return HeadKind::deterministic;
  throw ConfigError("unknown head kind '" + name + "'");
}

std::string to_string(MeanForm form) { return form == MeanForm::direct ? "direct" : "residual"; }

MeanForm mean_form_from_string(const std::string& name) {
  if (name == "direct") return MeanForm::direct;
  if (name == "residual") return MeanForm::residual;
  throw ConfigError("unknown mean form '" + name + "'");
}

namespace {

bool has_latent_input(HeadKind kind) { return kind == HeadKind::ddpm || kind == HeadKind::consistency; }

std::size_t output_width(const HeadSpec& spec) {
  return spec.kind == HeadKind::gaussian ? 2 * spec.action_dim : spec.action_dim;
}

}  // namespace

PolicyHead assemble_policy_head(const HeadSpec& spec, MlpParams net) {
  if (spec.feature_dim == 0 || spec.action_dim == 0) throw ConfigError("policy head needs nonzero widths");
  if (!(spec.log_std_min < spec.log_std_max)) throw ConfigError("policy head needs log_std_min < log_std_max");
  PolicyHead head;
  head.spec = spec;
  head.schedule = make_beta_schedule(spec.steps, spec.beta_min, spec.beta_max);
  if (spec.kind == HeadKind::consistency) head.cm = make_consistency_head(spec.steps, spec.cm_eps, spec.cm_t_max);
  const std::size_t in = spec.feature_dim + (has_latent_input(spec.kind) ? spec.action_dim + 1 : 0);
  if (net.input_width() != in || net.output_width() != output_width(spec)) {
    throw ConfigError("policy head network shape does not match its spec");
  }
  head.net = std::move(net);
  return head;
}

PolicyHead make_policy_head(const HeadSpec& spec, RngStream& rng) {
  std::vector<std::size_t> widths{spec.feature_dim + (has_latent_input(spec.kind) ? spec.action_dim + 1 : 0)};
  widths.insert(widths.end(), spec.hidden.begin(), spec.hidden.end());
  widths.push_back(output_width(spec));
  MlpParams net = make_mlp(widths, spec.activation, Activation::identity, rng);
  if (spec.zero_output) net.layers.back().weight.fill(0.0);
  return assemble_policy_head(spec, std::move(net));
}

BoundHead bind_head(Graph& graph, const PolicyHead& head, bool trainable) {
  BoundHead bound;
  bound.mlp = trainable ? bind_parameters(graph, head.net) : bind_constants(graph, head.net);
  const std::size_t f = head.spec.feature_dim;
  if (has_latent_input(head.spec.kind)) {
    const Var w0 = bound.mlp.weights.front();
    bound.w_features = graph.slice_rows(w0, 0, f);
    bound.w_latent = graph.slice_rows(w0, f, f + head.spec.action_dim + 1);
  } else {
    bound.w_features = bound.mlp.weights.front();
  }
  return bound;
}

Var project_features(Graph& graph, const PolicyHead& head, const BoundHead& bound, Var features) {
  if (graph.value(features).cols() != head.spec.feature_dim) {
    throw ConfigError("policy head expects " + std::to_string(head.spec.feature_dim) + " features, got " +
                      std::to_string(graph.value(features).cols()));
  }
  return graph.add(graph.matmul(features, bound.w_features), bound.mlp.biases.front());
}

Var head_network(Graph& graph, const PolicyHead& head, const BoundHead& bound, Var projected, Var latent,
                 double time_feature) {
  Var pre = projected;
  if (bound.w_latent.valid()) {
    const std::size_t rows = graph.value(projected).rows();
    const Var input = graph.concat_cols({latent, graph.constant(DenseArray(rows, 1, time_feature))});
    pre = graph.add(pre, graph.matmul(input, bound.w_latent));
  }
  const auto& layers = head.net.layers;
  Var h = activate(graph, pre, layers.front().activation);
  for (std::size_t l = 1; l < layers.size(); ++l) {
    h = activate(graph, graph.add(graph.matmul(h, bound.mlp.weights[l]), bound.mlp.biases[l]), layers[l].activation);
  }
  return h;
}

DiffusionChain sample_head(Graph& graph, const PolicyHead& head, const BoundHead& bound, Var projected,
                           RngStream& rng, const SampleOptions& options) {
  const std::size_t rows = graph.value(projected).rows(), dim = head.spec.action_dim;
  switch (head.spec.kind) {
    case HeadKind::ddpm: {
      const double K = static_cast<double>(head.schedule.steps());
      const MeanFn mean_fn = [&](Var x, std::size_t k) {
        const Var out = head_network(graph, head, bound, projected, x, static_cast<double>(k) / K);
        return head.spec.mean_form == MeanForm::residual ? graph.add(x, out) : out;
      };
      return ddpm_sample_with(graph, head.schedule, rows, dim, mean_fn, rng, options);
    }
    case HeadKind::consistency: {
      const DenoiseFn denoise = [&](Var x, double tau) {
        const Var raw = head_network(graph, head, bound, projected,
                                     graph.scale(x, consistency_c_in(tau, head.cm)), 0.25 * std::log(tau));
        return consistency_parameterize(graph, raw, x, tau, head.cm);
      };
      return consistency_sample_with(graph, head.cm, head.schedule.beta(1), rows, dim, denoise, rng);
    }
    case HeadKind::gaussian: {
      const Var out = head_network(graph, head, bound, projected, Var{}, 0.0);
      const Var mean = graph.slice_cols(out, 0, dim);
      const double lo = head.spec.log_std_min, hi = head.spec.log_std_max;
      const Var log_std =
          graph.add_scalar(graph.scale(graph.add_scalar(graph.tanh(graph.slice_cols(out, dim, 2 * dim)), 1.0),
                                       0.5 * (hi - lo)),
                           lo);
      const DenseArray z = options.frozen_steps ? DenseArray(rows, dim, 0.0) : gaussian_noise(rows, dim, 1.0, rng);
      const Var u = graph.add(mean, graph.mul(graph.exp(log_std), graph.constant(z)));
      const Var a = graph.tanh(u);
      DenseArray base(rows, 1);
      for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < dim; ++c) acc += -0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * z(r, c) * z(r, c);
        base[r] = acc;
      }
      const Var log_prob = graph.add(graph.sub(graph.constant(base), graph.row_sum(log_std)),
                                     graph.scale(graph.row_sum(graph.log_cosh(u)), 2.0));
      DiffusionChain chain;
      chain.latents = {u, a};
      chain.means = {mean};
      chain.step_log_probs = {log_prob};
      chain.variances = {0.0};
      chain.total = log_prob;
      chain.action = graph.clip_st(a, -1.0, 1.0);
      return chain;
    }
    case HeadKind::deterministic: {
      const Var a = graph.tanh(head_network(graph, head, bound, projected, Var{}, 0.0));
      DiffusionChain chain;
      chain.latents = {a};
      chain.total = zeros_column(graph, rows);
      chain.action = a;
      return chain;
    }
  }
  throw UsageError("unknown head kind");
}

DiffusionChain sample_head(Graph& graph, const PolicyHead& head, Var features, RngStream& rng, bool trainable,
                           const SampleOptions& options) {
  const BoundHead bound = bind_head(graph, head, trainable);
  return sample_head(graph, head, bound, project_features(graph, head, bound, features), rng, options);
}

double squashed_gaussian_log_prob(const DenseArray& action, const DenseArray& mean, const DenseArray& log_std) {
  if (!action.same_shape(mean) || !action.same_shape(log_std)) {
    throw UsageError("squashed_gaussian_log_prob: shape mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < action.size(); ++i) {
    if (!(std::abs(action[i]) < 1.0)) throw DomainError("squashed action must lie strictly inside (-1, 1)");
    const double u = std::atanh(action[i]);
    const double z = (u - mean[i]) * std::exp(-log_std[i]);
    total += -0.5 * std::log(2.0 * std::numbers::pi) - log_std[i] - 0.5 * z * z - std::log1p(-action[i] * action[i]);
  }
  return total;
}

}  // namespace hydo
