// SPDX-License-Identifier: Apache-2.0
//
// Layer building blocks. Layers own their parameters (autograd leaves) and
// running-statistics buffers; clone() produces an independent deep copy.

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "kaizen/autograd.hpp"
#include "kaizen/ops.hpp"
#include "kaizen/rng.hpp"

namespace kaizen::nn {

using ops::NormMode;

struct NamedParameter {
  std::string name;
  Var var;
  // Excluded from weight decay and LARS adaptation (biases, norm affines).
  bool is_bias_or_norm = false;
};

struct NamedBuffer {
  std::string name;
  Tensor* tensor;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Var forward(const Var& x, NormMode mode) = 0;
  virtual void collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) const = 0;
  virtual void collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out) { (void)prefix, (void)out; }
  virtual std::unique_ptr<Layer> clone() const = 0;
};

class Linear final : public Layer {
 public:
  // PyTorch-style U(-1/sqrt(in), 1/sqrt(in)) initialisation.
  Linear(int64_t in_features, int64_t out_features, Rng& rng, bool bias = true);

  Var forward(const Var& x, NormMode mode) override;
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) const override;
  std::unique_ptr<Layer> clone() const override;

  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }

 private:
  Linear() = default;
  Var weight_;
  Var bias_;
};

class Conv2d final : public Layer {
 public:
  // Kaiming-normal (fan_out, ReLU gain) initialisation, no bias.
  Conv2d(int64_t in_channels, int64_t out_channels, ops::Conv2dGeometry geometry, Rng& rng);

  Var forward(const Var& x, NormMode mode) override;
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) const override;
  std::unique_ptr<Layer> clone() const override;

 private:
  Conv2d() = default;
  Var weight_;
  ops::Conv2dGeometry geometry_;
};

class BatchNorm final : public Layer {
 public:
  explicit BatchNorm(int64_t channels, double momentum = 0.1, double eps = 1e-5);

  Var forward(const Var& x, NormMode mode) override;
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) const override;
  void collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out) override;
  std::unique_ptr<Layer> clone() const override;

 private:
  BatchNorm() = default;
  Var gamma_;
  Var beta_;
  Tensor running_mean_;
  Tensor running_var_;
  double momentum_ = 0.1;
  double eps_ = 1e-5;
};

class ReLU final : public Layer {
 public:
  Var forward(const Var& x, NormMode) override { return ops::relu(x); }
  void collect_parameters(const std::string&, std::vector<NamedParameter>&) const override {}
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(); }
};

class Flatten final : public Layer {
 public:
  Var forward(const Var& x, NormMode) override { return ops::flatten(x); }
  void collect_parameters(const std::string&, std::vector<NamedParameter>&) const override {}
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(); }
};

class GlobalAvgPool final : public Layer {
 public:
  Var forward(const Var& x, NormMode) override { return ops::global_avg_pool(x); }
  void collect_parameters(const std::string&, std::vector<NamedParameter>&) const override {}
  std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAvgPool>(); }
};

class Sequential final : public Layer {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  void push(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  Var forward(const Var& x, NormMode mode) override;
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) const override;
  void collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Sequential>(*this); }

  size_t size() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }

  std::vector<NamedParameter> parameters(const std::string& prefix = "") const;
  std::vector<NamedBuffer> buffers(const std::string& prefix = "");

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// ResNet basic block: conv3x3-BN-ReLU-conv3x3-BN plus identity or
// 1x1-conv/BN projection shortcut, followed by ReLU.
class BasicBlock final : public Layer {
 public:
  BasicBlock(int64_t in_channels, int64_t out_channels, int64_t stride, Rng& rng);

  Var forward(const Var& x, NormMode mode) override;
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) const override;
  void collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out) override;
  std::unique_ptr<Layer> clone() const override;

 private:
  BasicBlock() = default;
  Sequential main_;
  Sequential shortcut_;  // empty for identity
};

// Deep-copies parameter values and buffers from `src` into `dst`; both must
// have identical structure.
void copy_state(const Sequential& src, Sequential& dst);
uint64_t parameter_checksum(const Sequential& net);
int64_t parameter_count(const Sequential& net);

}  // namespace kaizen::nn
