// SPDX-License-Identifier: Apache-2.0

#include "kaizen/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace kaizen::nn {

Linear::Linear(int64_t in_features, int64_t out_features, Rng& rng, bool bias) {
  if (in_features <= 0 || out_features <= 0) throw std::invalid_argument("Linear: non-positive size");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  Tensor w({out_features, in_features});
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  weight_ = Var::parameter(std::move(w));
  if (bias) {
    Tensor b({out_features});
    for (double& v : b.values()) v = rng.uniform(-bound, bound);
    bias_ = Var::parameter(std::move(b));
  }
}

Var Linear::forward(const Var& x, NormMode) { return ops::linear(x, weight_, bias_); }

void Linear::collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) const {
  out.push_back({prefix + "weight", weight_, false});
  if (bias_.defined()) out.push_back({prefix + "bias", bias_, true});
}

std::unique_ptr<Layer> Linear::clone() const {
  auto copy = std::unique_ptr<Linear>(new Linear());
  copy->weight_ = weight_.deep_copy();
  if (bias_.defined()) copy->bias_ = bias_.deep_copy();
  return copy;
}

Conv2d::Conv2d(int64_t in_channels, int64_t out_channels, ops::Conv2dGeometry geometry, Rng& rng)
    : geometry_(geometry) {
  if (in_channels <= 0 || out_channels <= 0) throw std::invalid_argument("Conv2d: non-positive channels");
  const double fan_out = static_cast<double>(out_channels * geometry.kernel * geometry.kernel);
  const double stddev = std::sqrt(2.0 / fan_out);
  Tensor w({out_channels, in_channels, geometry.kernel, geometry.kernel});
  for (double& v : w.values()) v = rng.normal(0.0, stddev);
  weight_ = Var::parameter(std::move(w));
}

Var Conv2d::forward(const Var& x, NormMode) { return ops::conv2d(x, weight_, Var(), geometry_); }

void Conv2d::collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) const {
  out.push_back({prefix + "weight", weight_, false});
}

std::unique_ptr<Layer> Conv2d::clone() const {
  auto copy = std::unique_ptr<Conv2d>(new Conv2d());
  copy->weight_ = weight_.deep_copy();
  copy->geometry_ = geometry_;
  return copy;
}

BatchNorm::BatchNorm(int64_t channels, double momentum, double eps)
    : gamma_(Var::parameter(Tensor({channels}, 1.0))),
      beta_(Var::parameter(Tensor({channels}, 0.0))),
      running_mean_({channels}, 0.0),
      running_var_({channels}, 1.0),
      momentum_(momentum),
      eps_(eps) {}

Var BatchNorm::forward(const Var& x, NormMode mode) {
  return ops::batch_norm(x, gamma_, beta_, {&running_mean_, &running_var_, momentum_, eps_}, mode);
}

void BatchNorm::collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) const {
  out.push_back({prefix + "gamma", gamma_, true});
  out.push_back({prefix + "beta", beta_, true});
}

void BatchNorm::collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out) {
  out.push_back({prefix + "running_mean", &running_mean_});
  out.push_back({prefix + "running_var", &running_var_});
}

std::unique_ptr<Layer> BatchNorm::clone() const {
  auto copy = std::unique_ptr<BatchNorm>(new BatchNorm());
  copy->gamma_ = gamma_.deep_copy();
  copy->beta_ = beta_.deep_copy();
  copy->running_mean_ = running_mean_;
  copy->running_var_ = running_var_;
  copy->momentum_ = momentum_;
  copy->eps_ = eps_;
  return copy;
}

Sequential::Sequential(const Sequential& other) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential tmp(other);
    layers_ = std::move(tmp.layers_);
  }
  return *this;
}

Var Sequential::forward(const Var& x, NormMode mode) {
  Var h = x;
  for (auto& l : layers_) h = l->forward(h, mode);
  return h;
}

void Sequential::collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) const {
  for (size_t i = 0; i < layers_.size(); ++i) layers_[i]->collect_parameters(prefix + std::to_string(i) + ".", out);
}

void Sequential::collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out) {
  for (size_t i = 0; i < layers_.size(); ++i) layers_[i]->collect_buffers(prefix + std::to_string(i) + ".", out);
}

std::vector<NamedParameter> Sequential::parameters(const std::string& prefix) const {
  std::vector<NamedParameter> out;
  collect_parameters(prefix, out);
  return out;
}

std::vector<NamedBuffer> Sequential::buffers(const std::string& prefix) {
  std::vector<NamedBuffer> out;
  collect_buffers(prefix, out);
  return out;
}

BasicBlock::BasicBlock(int64_t in_channels, int64_t out_channels, int64_t stride, Rng& rng) {
  main_.emplace<Conv2d>(in_channels, out_channels, ops::Conv2dGeometry{3, stride, 1}, rng);
  main_.emplace<BatchNorm>(out_channels);
  main_.emplace<ReLU>();
  main_.emplace<Conv2d>(out_channels, out_channels, ops::Conv2dGeometry{3, 1, 1}, rng);
  main_.emplace<BatchNorm>(out_channels);
  if (stride != 1 || in_channels != out_channels) {
    shortcut_.emplace<Conv2d>(in_channels, out_channels, ops::Conv2dGeometry{1, stride, 0}, rng);
    shortcut_.emplace<BatchNorm>(out_channels);
  }
}

Var BasicBlock::forward(const Var& x, NormMode mode) {
  Var residual = main_.forward(x, mode);
  Var skip = shortcut_.empty() ? x : shortcut_.forward(x, mode);
  return ops::relu(ops::add(residual, skip));
}

void BasicBlock::collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) const {
  main_.collect_parameters(prefix + "main.", out);
  shortcut_.collect_parameters(prefix + "shortcut.", out);
}

void BasicBlock::collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out) {
  main_.collect_buffers(prefix + "main.", out);
  shortcut_.collect_buffers(prefix + "shortcut.", out);
}

std::unique_ptr<Layer> BasicBlock::clone() const {
  auto copy = std::unique_ptr<BasicBlock>(new BasicBlock());
  copy->main_ = main_;
  copy->shortcut_ = shortcut_;
  return copy;
}

void copy_state(const Sequential& src, Sequential& dst) {
  auto sp = src.parameters();
  auto dp = dst.parameters();
  if (sp.size() != dp.size()) throw std::invalid_argument("copy_state: parameter structure mismatch");
  for (size_t i = 0; i < sp.size(); ++i) {
    if (!sp[i].var.value().same_shape(dp[i].var.value())) {
      throw std::invalid_argument("copy_state: shape mismatch at " + sp[i].name);
    }
    dp[i].var.mutable_value() = sp[i].var.value();
  }
  auto sb = const_cast<Sequential&>(src).buffers();
  auto db = dst.buffers();
  if (sb.size() != db.size()) throw std::invalid_argument("copy_state: buffer structure mismatch");
  for (size_t i = 0; i < sb.size(); ++i) *db[i].tensor = *sb[i].tensor;
}

uint64_t parameter_checksum(const Sequential& net) {
  uint64_t h = 1469598103934665603ULL;
  for (const auto& p : net.parameters()) h = checksum(p.var.value(), h);
  return h;
}

int64_t parameter_count(const Sequential& net) {
  int64_t n = 0;
  for (const auto& p : net.parameters()) n += p.var.value().numel();
  return n;
}

}  // namespace kaizen::nn
