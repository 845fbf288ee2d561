#pragma once

#include "hydo/numerics/dense_array.hpp"

namespace hydo {

// Smallest variance used in any Gaussian log-density.
inline constexpr double kVarianceFloor = 1e-8;

// max(variance, kVarianceFloor); throws DomainError for variance <= 0.
double floored_variance(double variance);

/// Isotropic Gaussian log-density summed over all entries:
/// sum_i -0.5*log(2*pi*var) - (x_i - mean_i)^2 / (2*var).
double gaussian_log_prob(const DenseArray& x, const DenseArray& mean, double variance);

}  // namespace hydo
