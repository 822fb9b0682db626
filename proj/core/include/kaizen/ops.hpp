// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor operations used by the networks and losses.

#pragma once

#include <span>
#include <vector>

#include "kaizen/autograd.hpp"

namespace kaizen::ops {

// [N, K] x [K, M] -> [N, M]
Var matmul(const Var& a, const Var& b);
// x [N, in], weight [out, in], bias [out] (bias may be undefined) -> [N, out]
Var linear(const Var& x, const Var& weight, const Var& bias);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var relu(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);

// Sum of scalar terms w_i * x_i accumulated left to right.
Var weighted_sum(std::span<const Var> terms, std::span<const double> weights);

// Row-wise L2 normalisation with norm clamped below by eps.
Var l2_normalize_rows(const Var& x, double eps = 1e-12);
Tensor softmax_rows(const Tensor& logits, double temperature = 1.0);

// Flattens all trailing dimensions: [N, ...] -> [N, prod(...)].
Var flatten(const Var& x);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& x, int64_t begin, int64_t end);
// Gathers the listed columns of a rank-2 input, in order.
Var select_columns(const Var& x, std::span<const int32_t> columns);

struct Conv2dGeometry {
  int64_t kernel = 3;
  int64_t stride = 1;
  int64_t padding = 1;
};

// x [N, C, H, W], weight [O, C, k, k], bias [O] or undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, Conv2dGeometry geometry);
// [N, C, H, W] -> [N, C]
Var global_avg_pool(const Var& x);

enum class NormMode {
  kTrain,        // batch statistics, running statistics updated
  kTrainFrozen,  // batch statistics, running statistics untouched
  kEval,         // running statistics
};

struct BatchNormBuffers {
  Tensor* running_mean = nullptr;
  Tensor* running_var = nullptr;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Per-channel normalisation over rank-2 [N, C] or rank-4 [N, C, H, W] input.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, const BatchNormBuffers& buffers, NormMode mode);

}  // namespace kaizen::ops
