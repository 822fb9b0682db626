// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major double tensor. Rank 2 ([rows, cols]) is used for feature
// batches and rank 4 ([N, C, H, W]) for image batches.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace kaizen {

using Shape = std::vector<int64_t>;
// Aligned so that vectorised reductions see the same head/tail split on
// every run, which keeps results bitwise reproducible.
using Storage = std::vector<double, Eigen::aligned_allocator<double>>;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

int64_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  int64_t dim(size_t axis) const { return shape_.at(axis); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const Storage& storage() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Rank-2 element access.
  double& at(int64_t row, int64_t col) { return data_[static_cast<size_t>(row * shape_[1] + col)]; }
  double at(int64_t row, int64_t col) const { return data_[static_cast<size_t>(row * shape_[1] + col)]; }

  // Views the tensor as [dim(0), numel / dim(0)].
  MatrixMap matrix();
  ConstMatrixMap matrix() const;

  Tensor reshaped(Shape shape) const;
  void fill(double value);
  void add_(const Tensor& other, double scale = 1.0);

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  Shape shape_;
  Storage data_;
};

// FNV-1a over the raw bytes of the values; used for bitwise-equality checks
// on parameter groups.
uint64_t checksum(std::span<const double> values, uint64_t seed = 1469598103934665603ULL);
uint64_t checksum(const Tensor& tensor, uint64_t seed = 1469598103934665603ULL);

}  // namespace kaizen
