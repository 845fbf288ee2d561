#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hydo/numerics/dense_array.hpp"
#include "hydo/numerics/mlp.hpp"

namespace hydo {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<DenseArray> first_moment;
  std::vector<DenseArray> second_moment;

  bool operator==(const AdamState&) const = default;
};

AdamState make_adam(std::span<const DenseArray* const> params, AdamConfig config);
AdamState make_adam(const MlpParams& params, AdamConfig config);

/// One bias-corrected Adam update. Throws NumericFault (leaving params and
/// state untouched) if any gradient is non-finite, UsageError on shape
/// mismatch.
void adam_step(std::span<DenseArray* const> params, std::span<const DenseArray> grads,
               AdamState& state);
void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state);

}  // namespace hydo
