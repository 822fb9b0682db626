// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "kaizen/nn.hpp"

namespace kaizen::optim {

enum class OptimizerKind { kSgd, kLars };

OptimizerKind optimizer_kind_from_string(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::kSgd;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lars_eta = 0.02;
  int64_t warmup_steps = 0;
  double min_lr_ratio = 0.0;
};

// Cosine decay from the base rate to min_lr_ratio * base over total_steps,
// after an optional linear warm-up.
double cosine_learning_rate(const OptimizerSettings& settings, int64_t step, int64_t total_steps);

// SGD with heavy-ball momentum and decoupled-from-norm weight decay
// (L2 added to the gradient). With kLars the per-tensor update is scaled by
// the trust ratio eta * |w| / (|g| + wd |w|); biases and norm affines are
// excluded from both weight decay and adaptation.
class Optimizer {
 public:
  Optimizer(std::vector<nn::NamedParameter> params, OptimizerSettings settings, int64_t total_steps);

  // Applies one update using the accumulated gradients, then clears them.
  void step();
  void zero_grad();

  double current_learning_rate() const { return cosine_learning_rate(settings_, step_, total_steps_); }
  int64_t steps_taken() const { return step_; }
  const std::vector<nn::NamedParameter>& parameters() const { return params_; }

 private:
  std::vector<nn::NamedParameter> params_;
  std::vector<Tensor> velocity_;
  OptimizerSettings settings_;
  int64_t total_steps_;
  int64_t step_ = 0;
};

}  // namespace kaizen::optim
