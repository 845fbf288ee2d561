#include "hydo/numerics/dense_array.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "hydo/numerics/errors.hpp"

namespace hydo {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

DenseArray::DenseArray(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

DenseArray::DenseArray(std::size_t rows, std::size_t cols, double fill)
    : shape_{rows, cols}, values_(rows * cols, fill) {}

DenseArray::DenseArray(std::size_t rows, std::size_t cols, std::vector<double> values)
    : shape_{rows, cols}, values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw UsageError("DenseArray: " + std::to_string(values_.size()) + " values for shape " +
                     shape_string(shape_));
  }
}

DenseArray DenseArray::row(std::initializer_list<double> values) {
  return DenseArray(1, values.size(), std::vector<double>(values));
}

DenseArray DenseArray::column(std::span<const double> values) {
  return DenseArray(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

std::size_t DenseArray::bad_rank(const char* what) const {
  throw UsageError(std::string(what) + "() on rank-" + std::to_string(shape_.size()) + " array");
}

bool DenseArray::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double DenseArray::item() const {
  if (values_.size() != 1) throw UsageError("item() on array of shape " + shape_string(shape_));
  return values_[0];
}

void DenseArray::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

DenseArray DenseArray::reshaped(std::size_t rows, std::size_t cols) const {
  if (rows * cols != values_.size()) {
    throw UsageError("reshape " + shape_string(shape_) + " to " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  return DenseArray(rows, cols, values_);
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

}  // namespace hydo
