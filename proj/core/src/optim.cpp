// SPDX-License-Identifier: Apache-2.0

#include "kaizen/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace kaizen::optim {

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "lars") return OptimizerKind::kLars;
  throw std::invalid_argument("unknown optimizer '" + name + "' (expected sgd or lars)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "lars"; }

double cosine_learning_rate(const OptimizerSettings& settings, int64_t step, int64_t total_steps) {
  const double base = settings.learning_rate;
  if (settings.warmup_steps > 0 && step < settings.warmup_steps) {
    return base * static_cast<double>(step + 1) / static_cast<double>(settings.warmup_steps);
  }
  const int64_t decay_steps = std::max<int64_t>(1, total_steps - settings.warmup_steps);
  const double progress =
      std::min(1.0, static_cast<double>(step - settings.warmup_steps) / static_cast<double>(decay_steps));
  const double floor = base * settings.min_lr_ratio;
  return floor + 0.5 * (base - floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

Optimizer::Optimizer(std::vector<nn::NamedParameter> params, OptimizerSettings settings, int64_t total_steps)
    : params_(std::move(params)), settings_(settings), total_steps_(total_steps) {
  if (settings_.learning_rate < 0.0 || settings_.momentum < 0.0 || settings_.weight_decay < 0.0) {
    throw std::invalid_argument("optimizer settings must be non-negative");
  }
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.emplace_back(p.var.value().shape());
}

void Optimizer::step() {
  const double lr = current_learning_rate();
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.var.has_grad()) continue;
    Tensor& w = p.var.mutable_value();
    const Tensor& g = p.var.grad();
    const double wd = p.is_bias_or_norm ? 0.0 : settings_.weight_decay;
    double local_lr = lr;
    if (settings_.kind == OptimizerKind::kLars && !p.is_bias_or_norm) {
      double wn = 0.0;
      double gn = 0.0;
      for (int64_t k = 0; k < w.numel(); ++k) {
        wn += w[k] * w[k];
        gn += g[k] * g[k];
      }
      wn = std::sqrt(wn);
      gn = std::sqrt(gn);
      if (wn > 0.0 && gn > 0.0) local_lr *= settings_.lars_eta * wn / (gn + wd * wn);
    }
    Tensor& v = velocity_[i];
    for (int64_t k = 0; k < w.numel(); ++k) {
      const double d = g[k] + wd * w[k];
      v[k] = settings_.momentum * v[k] + d;
      w[k] -= local_lr * v[k];
    }
  }
  ++step_;
  zero_grad();
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

}  // namespace kaizen::optim
