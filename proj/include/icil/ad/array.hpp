#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/StdVector>

namespace icil::ad {

using Shape = std::vector<std::size_t>;
// Aligned so Eigen kernels take the same code path (and rounding) for every buffer.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Dense row-major float64 array. A default-constructed Array has no shape and
// marks a value that has not been evaluated.
class Array {
 public:
  Array() = default;
  explicit Array(Shape shape, double fill = 0.0);
  Array(Shape shape, std::vector<double> data);

  static Array scalar(double v);
  static Array matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Array zeros_like(const Array& other) { return Array(other.shape_); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rank() const noexcept { return shape_.size(); }
  bool empty() const noexcept { return shape_.empty(); }

  // Rank-1 arrays are viewed as a single row.
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  // Value of a single-element array.
  double item() const;

  MatrixMap matrix() { return MatrixMap(data_.data(), rows(), cols()); }
  ConstMatrixMap matrix() const { return ConstMatrixMap(data_.data(), rows(), cols()); }

  bool all_finite() const noexcept;
  std::string shape_string() const;

  friend bool operator==(const Array&, const Array&) = default;

 private:
  Shape shape_;
  Buffer data_;
};

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

}  // namespace icil::ad
