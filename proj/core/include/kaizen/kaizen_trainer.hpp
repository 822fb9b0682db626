// SPDX-License-Identifier: Apache-2.0
//
// Joint training step and per-task loops for three strategies:
//
//   kaizen      distillation on the extractor and the classifier, plus
//               current-task SSL and supervised losses
//   cassle      extractor-only distillation and SSL; the classifier is fit
//               post hoc on a frozen extractor after every task
//   no_distill  SSL only; classifier fit post hoc
//
// The four loss terms are always combined in the order kd_fe, kd_c, ct_c,
// ct_fe so that the logged total is reproducible from the logged parts.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kaizen/augment.hpp"
#include "kaizen/eval_metrics.hpp"
#include "kaizen/model_zoo.hpp"
#include "kaizen/optim.hpp"
#include "kaizen/replay_buffer.hpp"
#include "kaizen/ssl_objectives.hpp"
#include "kaizen/task_stream.hpp"

namespace kaizen {

enum class Strategy { kKaizen, kCassle, kNoDistill };

Strategy strategy_from_string(const std::string& name);
std::string to_string(Strategy strategy);

struct LossWeights {
  double kd_fe = 1.0;
  double kd_c = 2.0;
  double ct_c = 1.0;
  double ct_fe = 1.0;

  bool operator==(const LossWeights&) const = default;
};

struct LossBreakdown {
  double kd_fe = 0.0;
  double kd_c = 0.0;
  double ct_c = 0.0;
  double ct_fe = 0.0;
  LossWeights weights;
  double total = 0.0;
};

// Class support of the classifier distillation term. kSeenClasses compares
// the two classifiers' softmax over the classes the previous classifier was
// trained on; kAllClasses uses every output.
enum class DistillTargets { kSeenClasses, kAllClasses };

DistillTargets distill_targets_from_string(const std::string& name);
std::string to_string(DistillTargets targets);

struct StrategyConfig {
  Strategy strategy = Strategy::kKaizen;
  LossWeights weights;
  int64_t epochs_per_task = 500;
  double epoch_scale = 1.0;
  int64_t batch_size = 256;
  optim::OptimizerSettings optimizer;
  ClassifierInput classifier_input = ClassifierInput::kCurrentView1;
  DistillTargets distill_targets = DistillTargets::kSeenClasses;
  ssl::AugmentationPolicy augmentation;

  // Post-hoc classifier fit (baselines).
  int64_t posthoc_epochs = 30;
  optim::OptimizerSettings posthoc_optimizer{optim::OptimizerKind::kSgd, 0.1, 0.9, 0.0, 0.02, 0, 0.0};
  bool posthoc_augment = true;

  int64_t effective_epochs() const;
  // Throws ConfigError listing every violated constraint.
  void validate() const;
};

// Mean over rows with mask[i] != 0 of -log softmax(logits_i)[labels_i]; 0
// (and no gradient) when no row is selected.
Var cross_entropy_hard(const Var& logits, const std::vector<int32_t>& labels, const std::vector<uint8_t>& mask);
// Mean over all rows of -sum_c targets_ic log softmax(logits_i)_c.
Var cross_entropy_soft(const Var& logits, const Tensor& targets);

// A replay-mixed batch with two augmented views per row.
struct StepBatch {
  Tensor view1;  // [N, C, H, W]
  Tensor view2;
  std::vector<int32_t> labels;
  std::vector<uint8_t> labelled;
  std::vector<uint8_t> replay;
};

StepBatch make_step_batch(const std::vector<BatchItem>& items, const ImageSet& images,
                          const ssl::AugmentationPolicy& policy, Rng& rng);

struct LossTerms {
  Var kd_fe;
  Var kd_c;
  Var ct_c;
  Var ct_fe;
};

// Combines the terms in fixed order. Terms with weight 0 stay in the
// breakdown but are cut from the graph.
Var combine_losses(const LossTerms& terms, const LossWeights& weights, LossBreakdown* breakdown);

struct StepGraph {
  ForwardPaths paths;
  LossTerms terms;
  Var total;
  LossBreakdown breakdown;
};

// Forward pass and loss assembly without any update. `ct` and `kd` are the
// current-task and distillation objectives (separate queues for MoCo).
StepGraph build_step_graph(ModelState& state, const StepBatch& batch, const ssl::SSLObjective& ct,
                           const ssl::SSLObjective& kd, const StrategyConfig& config);

struct StepContext {
  int64_t task = 0;
  int64_t epoch = 0;
  int64_t step = 0;
};

// One optimizer update followed by the EMA and queue updates. A non-finite
// loss throws TrainingError carrying a dump of the loss parts and batch.
LossBreakdown train_step(ModelState& state, const StepBatch& batch, ssl::SSLObjective& ct, ssl::SSLObjective& kd,
                         const StrategyConfig& config, optim::Optimizer& optimizer, const StepContext& where = {});

struct LossRecord {
  StepContext where;
  LossBreakdown loss;
  double learning_rate = 0.0;
};

std::string loss_record_to_json(const LossRecord& record);

using LossSink = std::function<void(const LossRecord&)>;

// epochs_per_task passes over the task's samples, each batch mixed with
// replay rows. Batches with fewer than two rows are skipped. The task's
// classes are added to state.seen_classes.
void train_task(ModelState& state, const TaskData& task, const Dataset& dataset, ReplayBuffer& buffer,
                ssl::SSLObjective& ct, ssl::SSLObjective& kd, const StrategyConfig& config, Rng& rng,
                const LossSink& sink = {});

// Trains `classifier` on fixed inputs with softmax cross-entropy. Returns
// the final-epoch mean loss.
double fit_classifier_on_features(nn::Sequential& classifier, const Tensor& features,
                                  const std::vector<int32_t>& labels, int64_t epochs, int64_t batch_size,
                                  const optim::OptimizerSettings& settings, Rng& rng);

// Re-initialises the classifier and fits it on the current task's labelled
// samples plus every buffer entry, with the extractor frozen in eval mode.
void fit_classifier_posthoc(ModelState& state, const TaskData& task, const Dataset& dataset,
                            const ReplayBuffer& buffer, const StrategyConfig& config, Rng& rng);

struct ContinualOptions {
  double replay_fraction = 0.01;
  int64_t min_per_batch = ReplayBuffer::kDefaultMinPerBatch;
  ssl::SSLHyperparameters ssl;
  LossSink sink;
  // Called after each task with the trained state and buffer.
  std::function<void(int64_t task, ModelState&, const ReplayBuffer&)> on_task_end;
};

struct ContinualResult {
  AccuracyMatrix matrix;
  ModelState final_state;
  ReplayBuffer buffer;
};

ContinualResult run_continual(const TaskStream& stream, const ArchitectureSpec& arch, ssl::SSLKind kind,
                              const StrategyConfig& config, const ContinualOptions& options, uint64_t seed);

// Seed of the k-th single-task model; task 1 reuses `seed`.
uint64_t single_task_seed(uint64_t seed, int64_t task_index);

// A'(k, k) for every k: a fresh model per task trained like the first task
// of a continual run (no replay, no distillation).
std::vector<double> run_single_task_baselines(const TaskStream& stream, const ArchitectureSpec& arch,
                                              ssl::SSLKind kind, const StrategyConfig& config,
                                              const ContinualOptions& options, uint64_t seed);

}  // namespace kaizen
