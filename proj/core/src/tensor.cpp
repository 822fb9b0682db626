// SPDX-License-Identifier: Apache-2.0

#include "kaizen/tensor.hpp"

#include <cstring>
#include <sstream>
#include <stdexcept>

namespace kaizen {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension in " + shape_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(values.begin(), values.end()) {
  if (shape_numel(shape_) != static_cast<int64_t>(data_.size())) {
    throw std::invalid_argument("tensor value count " + std::to_string(data_.size()) + " does not match shape " +
                                shape_string(shape_));
  }
}

MatrixMap Tensor::matrix() {
  const int64_t rows = shape_.empty() ? 1 : shape_[0];
  const int64_t cols = rows == 0 ? 0 : numel() / rows;
  return MatrixMap(data_.data(), rows, cols);
}

ConstMatrixMap Tensor::matrix() const {
  const int64_t rows = shape_.empty() ? 1 : shape_[0];
  const int64_t cols = rows == 0 ? 0 : numel() / rows;
  return ConstMatrixMap(data_.data(), rows, cols);
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw std::invalid_argument("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void Tensor::add_(const Tensor& other, double scale) {
  if (other.numel() != numel()) {
    throw std::invalid_argument("add_: shape mismatch " + shape_string(shape_) + " vs " + shape_string(other.shape_));
  }
  const double* src = other.data();
  double* dst = data();
  const int64_t n = numel();
  if (scale == 1.0) {
    for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
  } else {
    for (int64_t i = 0; i < n; ++i) dst[i] += scale * src[i];
  }
}

uint64_t checksum(std::span<const double> values, uint64_t seed) {
  uint64_t h = seed;
  for (double v : values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

uint64_t checksum(const Tensor& tensor, uint64_t seed) { return checksum(tensor.values(), seed); }

}  // namespace kaizen
