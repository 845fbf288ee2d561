#include "hydo/numerics/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hydo/numerics/errors.hpp"

namespace hydo {

double floored_variance(double variance) {
  if (!(variance > 0.0)) throw DomainError("Gaussian variance must be positive");
  return std::max(variance, kVarianceFloor);
}

double gaussian_log_prob(const DenseArray& x, const DenseArray& mean, double variance) {
  if (!x.same_shape(mean)) {
    throw UsageError("gaussian_log_prob: shapes " + shape_string(x.shape()) + " and " +
                     shape_string(mean.shape()));
  }
  const double var = floored_variance(variance);
  const double norm = -0.5 * std::log(2.0 * std::numbers::pi * var);
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - mean[i];
    total += norm - d * d / (2.0 * var);
  }
  return total;
}

}  // namespace hydo
