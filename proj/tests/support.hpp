// SPDX-License-Identifier: Apache-2.0
//
// Small fixtures shared by the unit tests and the acceptance binary.

#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>

#include "kaizen/dataset.hpp"
#include "kaizen/experiment.hpp"
#include "kaizen/kaizen_trainer.hpp"
#include "kaizen/model_zoo.hpp"
#include "kaizen/task_stream.hpp"
#include "oracles.hpp"

namespace testing_support {

inline kaizen::Tensor to_tensor(const oracle::Matrix& m) {
  std::vector<double> v;
  for (const auto& r : m) v.insert(v.end(), r.begin(), r.end());
  return kaizen::Tensor({static_cast<int64_t>(m.size()), static_cast<int64_t>(m[0].size())}, v);
}

inline oracle::Matrix to_matrix(const kaizen::Tensor& t) {
  oracle::Matrix m(static_cast<size_t>(t.dim(0)), std::vector<double>(static_cast<size_t>(t.dim(1))));
  for (int64_t i = 0; i < t.dim(0); ++i)
    for (int64_t j = 0; j < t.dim(1); ++j) m[static_cast<size_t>(i)][static_cast<size_t>(j)] = t.at(i, j);
  return m;
}

inline oracle::Matrix random_matrix(kaizen::Rng& rng, size_t rows, size_t cols, double scale = 1.0) {
  oracle::Matrix m(rows, std::vector<double>(cols));
  for (auto& r : m)
    for (auto& x : r) x = scale * rng.normal();
  return m;
}

// 4 classes of 8x8 images (by default), 2 tasks, mlp backbone: a full continual run
// takes a fraction of a second.
struct Tiny {
  std::shared_ptr<const kaizen::Dataset> dataset;
  kaizen::TaskStream stream;
  kaizen::ArchitectureSpec arch;
  kaizen::StrategyConfig config;
  kaizen::ContinualOptions options;
  kaizen::ssl::SSLKind kind;
};

inline Tiny make_tiny(kaizen::ssl::SSLKind kind = kaizen::ssl::SSLKind::kSimCLR,
                      kaizen::Strategy strategy = kaizen::Strategy::kKaizen, int64_t num_tasks = 2,
                      int64_t num_classes = 4) {
  Tiny t;
  t.kind = kind;
  kaizen::SyntheticSpec spec;
  spec.num_classes = num_classes;
  spec.train_per_class = 12;
  spec.test_per_class = 6;
  spec.image_size = 8;
  t.dataset = std::make_shared<const kaizen::Dataset>(kaizen::make_synthetic_dataset(spec));
  t.stream = kaizen::build_stream(t.dataset, kaizen::split_classes(num_classes, num_tasks, 3), 1.0, 3);

  t.arch.backbone = "mlp";
  t.arch.mlp_hidden = {16};
  t.arch.image_size = 8;
  t.arch.projector_hidden = 16;
  t.arch.projector_dim = 8;
  t.arch.predictor_hidden = 16;
  t.arch.classifier_hidden = 8;
  t.arch.num_outputs = num_classes;

  t.config.strategy = strategy;
  t.config.epochs_per_task = 2;
  t.config.batch_size = 8;
  t.config.augmentation = kaizen::ssl::AugmentationPolicy::defaults(8);
  t.config.posthoc_epochs = 2;

  t.options.replay_fraction = 0.25;
  t.options.min_per_batch = 2;
  t.options.ssl = kaizen::ssl::SSLHyperparameters::defaults(kind);
  t.options.ssl.queue_size = 16;
  return t;
}

// Desk-scale configuration in the form used by the direction tests.
inline kaizen::ExperimentConfig desk_config(kaizen::Strategy strategy, double replay_fraction) {
  kaizen::ExperimentConfig c = kaizen::preset("desk2");
  c.training.strategy = strategy;
  c.replay_fraction = replay_fraction;
  c.single_task_baselines = false;
  c.save_checkpoints = false;
  return c;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("kaizen_" + tag + "_" + std::to_string(reinterpret_cast<uintptr_t>(this)) + "_" +
            std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace testing_support
