// SPDX-License-Identifier: Apache-2.0
//
// Self-supervised objectives: SimCLR (NT-Xent), MoCoV2+ (InfoNCE against a
// FIFO queue of keys), BYOL (2 - 2 cos) and VICReg (invariance / variance /
// covariance). Each loss is a fused autograd op with analytic gradients for
// both of its inputs. Whether the target side is gradient-stopped is decided
// by the caller.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kaizen/autograd.hpp"
#include "kaizen/nn.hpp"
#include "kaizen/rng.hpp"

namespace kaizen::ssl {

enum class SSLKind { kSimCLR, kMoCoV2Plus, kBYOL, kVICReg };

// Accepts "simclr", "mocov2+" (also "mocov2plus", "moco"), "byol", "vicreg",
// case-insensitively.
SSLKind kind_from_string(const std::string& name);
std::string to_string(SSLKind kind);

bool uses_momentum_encoder(SSLKind kind);
bool uses_queue(SSLKind kind);

struct VicregWeights {
  double invariance = 25.0;
  double variance = 25.0;
  double covariance = 1.0;
};

struct SSLHyperparameters {
  double temperature = 0.5;
  int64_t queue_size = 4096;
  double ema_momentum = 0.996;
  VicregWeights vicreg;
  bool symmetrize = false;

  // Published defaults of each method.
  static SSLHyperparameters defaults(SSLKind kind);
};

// Mean over the 2N anchors of -log softmax of the positive among the 2N - 1
// other embeddings; rows are L2-normalised first.
Var nt_xent_loss(const Var& a, const Var& b, double temperature);

// Mean over rows of -log softmax of q_i . k_i against q_i . queue_j; q and k
// are L2-normalised, the queue is used as given.
Var info_nce_loss(const Var& queries, const Var& keys, const Tensor& queue, double temperature);

// Mean over rows of 2 - 2 cos(p_i, z_i).
Var byol_loss(const Var& predictions, const Var& targets);

struct VicregTerms {
  double invariance = 0.0;
  double variance = 0.0;
  double covariance = 0.0;
};

// Component values without building a graph.
VicregTerms vicreg_terms(const Tensor& a, const Tensor& b);
Var vicreg_loss(const Var& a, const Var& b, const VicregWeights& weights);

class SSLObjective {
 public:
  SSLObjective(SSLKind kind, SSLHyperparameters hyper, int64_t embedding_dim, uint64_t seed = 0);

  SSLKind kind() const { return kind_; }
  const SSLHyperparameters& hyper() const { return hyper_; }
  int64_t embedding_dim() const { return dim_; }

  // online/target rows are aligned by source sample.
  Var loss(const Var& online, const Var& target) const;

  // MoCoV2+ only: L2-normalises `keys` and enqueues them, evicting the
  // oldest entries beyond capacity.
  void queue_update(const Tensor& keys);
  // Queue contents, oldest first, as [capacity, dim].
  Tensor queue() const;
  int64_t queue_capacity() const { return capacity_; }

  // Raw ring state for checkpoints.
  const std::vector<double>& queue_storage() const { return storage_; }
  int64_t queue_head() const { return head_; }
  void restore_queue(std::vector<double> storage, int64_t head);

 private:
  Var directional_loss(const Var& online, const Var& target) const;

  SSLKind kind_;
  SSLHyperparameters hyper_;
  int64_t dim_;
  int64_t capacity_ = 0;
  std::vector<double> storage_;  // capacity_ x dim_ ring
  int64_t head_ = 0;             // next write slot == oldest entry
};

// Projection head placed after the backbone: Linear-BN-ReLU-Linear, with an
// extra hidden block for VICReg.
nn::Sequential make_projector(SSLKind kind, int64_t in_dim, int64_t hidden_dim, int64_t out_dim, Rng& rng);
// Predictor head: Linear-BN-ReLU-Linear mapping an embedding to the same width.
nn::Sequential make_predictor(int64_t dim, int64_t hidden_dim, Rng& rng);

}  // namespace kaizen::ssl
