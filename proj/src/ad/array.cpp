#include "icil/ad/array.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "icil/common/error.hpp"

namespace icil::ad {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Array::Array(Shape shape, double fill) : shape_(std::move(shape)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("Array: zero extent in shape " + icil::ad::shape_string(shape_));
  }
  if (shape_.empty()) throw ShapeError("Array: shape must have at least one extent");
  data_.assign(shape_size(shape_), fill);
}

Array::Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (shape_.empty()) throw ShapeError("Array: shape must have at least one extent");
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("Array: zero extent in shape " + icil::ad::shape_string(shape_));
  }
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("Array: shape " + icil::ad::shape_string(shape_) + " needs " +
                     std::to_string(shape_size(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

Array Array::scalar(double v) { return Array({1}, std::vector<double>{v}); }

Array Array::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Array({rows, cols}, std::move(data));
}

std::size_t Array::rows() const noexcept {
  if (shape_.size() < 2) return shape_.empty() ? 0 : 1;
  return shape_[0];
}

std::size_t Array::cols() const noexcept {
  if (shape_.empty()) return 0;
  if (shape_.size() == 1) return shape_[0];
  return data_.size() / shape_[0];
}

double Array::item() const {
  if (data_.size() != 1) {
    throw ShapeError("Array::item: expected a single element, shape is " + shape_string());
  }
  return data_[0];
}

bool Array::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Array::shape_string() const { return icil::ad::shape_string(shape_); }

}  // namespace icil::ad
