// SPDX-License-Identifier: Apache-2.0
//
// All networks of one continual-learning run: the current feature extractor
// (backbone + projector), the optional momentum copy, the two predictors,
// the classifier, and the frozen snapshot of the previous task's extractor
// and classifier.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kaizen/nn.hpp"
#include "kaizen/ssl_objectives.hpp"

namespace kaizen {

struct ArchitectureSpec {
  // "resnet18" (CIFAR stem), "resnet_mini" (three single-block stages) or "mlp".
  std::string backbone = "resnet18";
  int64_t base_width = 64;
  int64_t stem_stride = 1;
  std::vector<int64_t> mlp_hidden{512, 256};
  int64_t input_channels = 3;
  int64_t image_size = 32;

  int64_t projector_hidden = 2048;
  int64_t projector_dim = 256;
  int64_t predictor_hidden = 4096;
  int64_t classifier_hidden = 1000;
  int64_t num_outputs = 100;

  bool operator==(const ArchitectureSpec&) const = default;
};

class FeatureExtractor {
 public:
  struct Output {
    Var features;   // backbone output, classifier input
    Var embedding;  // projector output, SSL loss input
  };

  FeatureExtractor() = default;
  FeatureExtractor(nn::Sequential backbone, nn::Sequential projector)
      : backbone_(std::move(backbone)), projector_(std::move(projector)) {}

  Output forward(const Var& images, nn::NormMode mode);

  std::vector<nn::NamedParameter> parameters(const std::string& prefix) const;
  std::vector<nn::NamedBuffer> buffers(const std::string& prefix);
  uint64_t checksum() const;

  nn::Sequential& backbone() { return backbone_; }
  nn::Sequential& projector() { return projector_; }
  const nn::Sequential& backbone() const { return backbone_; }
  const nn::Sequential& projector() const { return projector_; }

 private:
  nn::Sequential backbone_;
  nn::Sequential projector_;
};

enum class ClassifierInput {
  kCurrentView1,   // g(stop-grad(f_current(x1)))
  kMomentumView2,  // g(stop-grad(target extractor(x2)))
};

ClassifierInput classifier_input_from_string(const std::string& name);
std::string to_string(ClassifierInput input);

struct ModelState {
  ArchitectureSpec spec;
  ssl::SSLKind ssl_kind = ssl::SSLKind::kSimCLR;
  int64_t task_index = 1;

  FeatureExtractor current;                      // f_t^O
  std::optional<FeatureExtractor> momentum;      // f_t^T (momentum kinds)
  nn::Sequential predictor_kd;                   // h^O
  nn::Sequential predictor_ssl;                  // h^T
  nn::Sequential classifier;                     // g_t
  std::optional<FeatureExtractor> previous;      // f_{t-1}^O
  std::optional<nn::Sequential> previous_classifier;  // g_{t-1}
  std::vector<int32_t> seen_classes;      // sorted classes the classifier has been trained on
  std::vector<int32_t> previous_classes;  // seen_classes at snapshot time

  bool has_previous() const { return previous.has_value() && previous_classifier.has_value(); }

  int64_t feature_dim() const;
  int64_t embedding_dim() const { return spec.projector_dim; }

  // Parameters updated by the optimizer: f_current, h^O, h^T and optionally
  // the classifier.
  std::vector<nn::NamedParameter> trainable_parameters(bool include_classifier) const;

  // Every parameter and buffer under a stable name (checkpoint layout).
  std::map<std::string, Tensor*> named_state();
};

nn::Sequential build_backbone(const ArchitectureSpec& spec, Rng& rng, int64_t* feature_dim);
nn::Sequential build_classifier(int64_t in_dim, int64_t hidden, int64_t outputs, Rng& rng);

ModelState init_model(const ArchitectureSpec& spec, ssl::SSLKind kind, uint64_t seed);

// theta_m <- momentum * theta_m + (1 - momentum) * theta_current, for
// parameters and normalisation buffers.
void ema_update(ModelState& state, double momentum);

// Freezes deep copies of f_current and the classifier as the previous-task
// snapshot (with its seen classes) and advances task_index. Predictors and
// classifier carry on.
void snapshot_previous(ModelState& state);

// Marks every parameter of the network as non-trainable.
void freeze(nn::Sequential& net);
void freeze(FeatureExtractor& extractor);

struct ForwardPaths {
  Var features_online;  // backbone(x1)
  Var z_online;         // f_current(x1)
  Var z_target;         // target extractor(x2)
  Var features_target;
  Var p_kd;             // h^O(z_online)
  Var p_ssl;            // h^T(z_online)
  Var c_current;        // g_t(stop-grad features)
  Var z_previous;       // f_{t-1}(x1), gradient-free; undefined on task 1
  Var c_previous;       // g_{t-1}(f_{t-1}(x1)), gradient-free; undefined on task 1
};

// With need_previous = false the frozen snapshot is not evaluated even when
// present (strategies without distillation).
ForwardPaths forward_paths(ModelState& state, const Tensor& view1, const Tensor& view2,
                           ClassifierInput classifier_input = ClassifierInput::kCurrentView1,
                           bool need_previous = true);

// Evaluation-mode logits over all classes.
Tensor predict_logits(ModelState& state, const Tensor& images);
// Evaluation-mode backbone features.
Tensor extract_features(FeatureExtractor& extractor, const Tensor& images);

// Binary checkpoint: magic, JSON header (names, shapes, metadata), raw
// little-endian doubles. `metadata` is stored verbatim as a JSON object.
void save_checkpoint(const std::filesystem::path& path, ModelState& state, const std::string& metadata_json = "{}");
// Restores into a state built with the same spec/kind; returns metadata.
std::string load_checkpoint(const std::filesystem::path& path, ModelState& state);

}  // namespace kaizen
