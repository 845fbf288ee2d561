#include "hydo/numerics/adam.hpp"

#include <cmath>
#include <string>

#include "hydo/numerics/errors.hpp"

namespace hydo {

AdamState make_adam(std::span<const DenseArray* const> params, AdamConfig config) {
  AdamState state;
  state.config = config;
  for (const DenseArray* p : params) {
    state.first_moment.emplace_back(p->shape(), 0.0);
    state.second_moment.emplace_back(p->shape(), 0.0);
  }
  return state;
}

AdamState make_adam(const MlpParams& params, AdamConfig config) {
  const auto arrays = parameter_arrays(params);
  return make_adam(std::span<const DenseArray* const>(arrays), config);
}

void adam_step(std::span<DenseArray* const> params, std::span<const DenseArray> grads,
               AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw UsageError("adam_step: " + std::to_string(params.size()) + " params, " +
                     std::to_string(grads.size()) + " grads, " +
                     std::to_string(state.first_moment.size()) + " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(grads[i]) || !params[i]->same_shape(state.first_moment[i])) {
      throw UsageError("adam_step: shape mismatch at slot " + std::to_string(i));
    }
    if (!grads[i].all_finite()) {
      throw NumericFault("adam_step: non-finite gradient at slot " + std::to_string(i) +
                         " (step " + std::to_string(state.step + 1) + ")");
    }
  }

  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    auto g = grads[i].values();
    auto m = state.first_moment[i].values();
    auto v = state.second_moment[i].values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      p[k] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state) {
  auto p = parameter_arrays(params);
  std::vector<DenseArray> g;
  for (const DenseArray* a : parameter_arrays(grads)) g.push_back(*a);
  adam_step(std::span<DenseArray* const>(p), std::span<const DenseArray>(g), state);
}

}  // namespace hydo
