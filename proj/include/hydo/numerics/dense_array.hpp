#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace hydo {

/// Row-major array of doubles with an explicit shape.
///
/// Most of the code base works with rank-2 arrays (rows x cols); a scalar is
/// a 1x1 array. Higher ranks are only used for storage.
class DenseArray {
 public:
  DenseArray() = default;
  explicit DenseArray(std::vector<std::size_t> shape, double fill = 0.0);
  DenseArray(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseArray(std::size_t rows, std::size_t cols, std::vector<double> values);

  static DenseArray scalar(double value) { return DenseArray(1, 1, value); }
  static DenseArray row(std::initializer_list<double> values);
  static DenseArray column(std::span<const double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  // Rank-2 views; rank-1 arrays behave as a single row.
  std::size_t rows() const {
    if (shape_.size() == 2) return shape_[0];
    return shape_.size() == 1 ? 1 : (shape_.empty() ? 0 : bad_rank("rows"));
  }
  std::size_t cols() const {
    if (shape_.size() == 2) return shape_[1];
    return shape_.size() == 1 ? shape_[0] : (shape_.empty() ? 0 : bad_rank("cols"));
  }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  bool same_shape(const DenseArray& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  double item() const;  // requires size() == 1

  void fill(double value);
  DenseArray reshaped(std::size_t rows, std::size_t cols) const;

  bool operator==(const DenseArray& other) const = default;

 private:
  [[noreturn]] std::size_t bad_rank(const char* what) const;

  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

}  // namespace hydo
