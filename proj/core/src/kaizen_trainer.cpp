// SPDX-License-Identifier: Apache-2.0

#include "kaizen/kaizen_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "kaizen/errors.hpp"
#include "kaizen/ops.hpp"

namespace kaizen {

Strategy strategy_from_string(const std::string& name) {
  if (name == "kaizen") return Strategy::kKaizen;
  if (name == "cassle") return Strategy::kCassle;
  if (name == "no_distill") return Strategy::kNoDistill;
  throw ConfigError("unknown strategy '" + name + "' (expected kaizen, cassle or no_distill)");
}

std::string to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::kKaizen: return "kaizen";
    case Strategy::kCassle: return "cassle";
    case Strategy::kNoDistill: return "no_distill";
  }
  return "?";
}

DistillTargets distill_targets_from_string(const std::string& name) {
  if (name == "seen_classes") return DistillTargets::kSeenClasses;
  if (name == "all_classes") return DistillTargets::kAllClasses;
  throw ConfigError("unknown distill_targets '" + name + "' (expected seen_classes or all_classes)");
}

std::string to_string(DistillTargets targets) {
  return targets == DistillTargets::kSeenClasses ? "seen_classes" : "all_classes";
}

int64_t StrategyConfig::effective_epochs() const {
  return static_cast<int64_t>(std::llround(static_cast<double>(epochs_per_task) * epoch_scale));
}

void StrategyConfig::validate() const {
  std::vector<std::string> problems;
  auto nonneg = [&](double w, const char* name) {
    if (!(w >= 0.0) || !std::isfinite(w)) problems.push_back(std::string("weight ") + name + " must be a finite value >= 0");
  };
  nonneg(weights.kd_fe, "kd_fe");
  nonneg(weights.kd_c, "kd_c");
  nonneg(weights.ct_c, "ct_c");
  nonneg(weights.ct_fe, "ct_fe");
  if (epochs_per_task < 0) problems.push_back("epochs_per_task must be >= 0");
  if (!(epoch_scale >= 0.0)) problems.push_back("epoch_scale must be >= 0");
  if (batch_size < 2) problems.push_back("batch_size must be >= 2");
  if (!(optimizer.learning_rate > 0.0)) problems.push_back("optimizer learning_rate must be > 0");
  if (optimizer.momentum < 0.0 || optimizer.momentum >= 1.0) problems.push_back("optimizer momentum must lie in [0, 1)");
  if (optimizer.weight_decay < 0.0) problems.push_back("optimizer weight_decay must be >= 0");
  if (posthoc_epochs < 0) problems.push_back("posthoc_epochs must be >= 0");
  if (!(posthoc_optimizer.learning_rate > 0.0)) problems.push_back("posthoc learning_rate must be > 0");
  if (!problems.empty()) {
    std::string msg = "invalid strategy configuration:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
}

namespace {

// Row-wise log-softmax of a rank-2 tensor.
Tensor log_softmax_rows(const Tensor& logits) {
  Tensor out(logits.shape());
  const int64_t n = logits.dim(0);
  const int64_t c = logits.dim(1);
  for (int64_t i = 0; i < n; ++i) {
    double mx = logits.at(i, 0);
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, logits.at(i, j));
    double s = 0.0;
    for (int64_t j = 0; j < c; ++j) s += std::exp(logits.at(i, j) - mx);
    const double lse = mx + std::log(s);
    for (int64_t j = 0; j < c; ++j) out.at(i, j) = logits.at(i, j) - lse;
  }
  return out;
}

Var zero_scalar() { return Var::constant(Tensor({1}, 0.0)); }

}  // namespace

Var cross_entropy_hard(const Var& logits, const std::vector<int32_t>& labels, const std::vector<uint8_t>& mask) {
  const Tensor& z = logits.value();
  if (z.rank() != 2) throw std::invalid_argument("cross_entropy_hard: logits must be rank 2");
  const int64_t n = z.dim(0);
  const int64_t c = z.dim(1);
  if (static_cast<int64_t>(labels.size()) != n || static_cast<int64_t>(mask.size()) != n) {
    throw std::invalid_argument("cross_entropy_hard: labels/mask size must equal the batch size");
  }
  int64_t count = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    const int32_t y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= c) throw std::invalid_argument("cross_entropy_hard: label " + std::to_string(y) + " out of range");
    ++count;
  }
  if (count == 0) return zero_scalar();
  const Tensor logp = log_softmax_rows(z);
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    if (mask[static_cast<size_t>(i)]) loss -= logp.at(i, labels[static_cast<size_t>(i)]);
  }
  const double inv = 1.0 / static_cast<double>(count);
  return make_op(Tensor({1}, loss * inv), {logits}, [logp, labels, mask, inv](const Tensor& g, std::vector<Tensor*>& in) {
    if (!in[0]) return;
    Tensor& gz = *in[0];
    const int64_t rows = logp.dim(0);
    const int64_t cols = logp.dim(1);
    for (int64_t i = 0; i < rows; ++i) {
      if (!mask[static_cast<size_t>(i)]) continue;
      for (int64_t j = 0; j < cols; ++j) {
        const double target = j == labels[static_cast<size_t>(i)] ? 1.0 : 0.0;
        gz.at(i, j) += g[0] * inv * (std::exp(logp.at(i, j)) - target);
      }
    }
  });
}

Var cross_entropy_soft(const Var& logits, const Tensor& targets) {
  const Tensor& z = logits.value();
  if (z.rank() != 2 || !z.same_shape(targets)) {
    throw std::invalid_argument("cross_entropy_soft: logits and targets must share a rank-2 shape");
  }
  const int64_t n = z.dim(0);
  const int64_t c = z.dim(1);
  if (n == 0) return zero_scalar();
  const Tensor logp = log_softmax_rows(z);
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < c; ++j) loss -= targets.at(i, j) * logp.at(i, j);
  }
  const double inv = 1.0 / static_cast<double>(n);
  return make_op(Tensor({1}, loss * inv), {logits}, [logp, targets, inv](const Tensor& g, std::vector<Tensor*>& in) {
    if (!in[0]) return;
    Tensor& gz = *in[0];
    const int64_t rows = logp.dim(0);
    const int64_t cols = logp.dim(1);
    for (int64_t i = 0; i < rows; ++i) {
      double mass = 0.0;
      for (int64_t j = 0; j < cols; ++j) mass += targets.at(i, j);
      for (int64_t j = 0; j < cols; ++j) {
        gz.at(i, j) += g[0] * inv * (mass * std::exp(logp.at(i, j)) - targets.at(i, j));
      }
    }
  });
}

StepBatch make_step_batch(const std::vector<BatchItem>& items, const ImageSet& images,
                          const ssl::AugmentationPolicy& policy, Rng& rng) {
  if (items.empty()) throw std::invalid_argument("make_step_batch: empty batch");
  std::vector<Tensor> v1;
  std::vector<Tensor> v2;
  StepBatch batch;
  for (const auto& item : items) {
    if (item.sample < 0 || item.sample >= images.size()) {
      throw std::out_of_range("make_step_batch: sample " + std::to_string(item.sample) + " out of range");
    }
    auto pair = ssl::augment_pair(images.image(item.sample), images.height, images.width, policy, rng, item.sample);
    v1.push_back(std::move(pair.view1));
    v2.push_back(std::move(pair.view2));
    batch.labels.push_back(item.label);
    batch.labelled.push_back(item.labelled ? 1 : 0);
    batch.replay.push_back(item.replay ? 1 : 0);
  }
  batch.view1 = ssl::stack_images(v1);
  batch.view2 = ssl::stack_images(v2);
  return batch;
}

Var combine_losses(const LossTerms& terms, const LossWeights& weights, LossBreakdown* breakdown) {
  const Var parts[4] = {terms.kd_fe, terms.kd_c, terms.ct_c, terms.ct_fe};
  const double w[4] = {weights.kd_fe, weights.kd_c, weights.ct_c, weights.ct_fe};
  std::vector<Var> graph_terms;
  for (int i = 0; i < 4; ++i) {
    if (!parts[i].defined()) throw std::invalid_argument("combine_losses: undefined loss term");
    graph_terms.push_back(w[i] == 0.0 ? parts[i].detach() : parts[i]);
  }
  Var total = ops::weighted_sum(graph_terms, w);
  if (breakdown) {
    breakdown->kd_fe = parts[0].value()[0];
    breakdown->kd_c = parts[1].value()[0];
    breakdown->ct_c = parts[2].value()[0];
    breakdown->ct_fe = parts[3].value()[0];
    breakdown->weights = weights;
    breakdown->total = total.value()[0];
  }
  return total;
}

StepGraph build_step_graph(ModelState& state, const StepBatch& batch, const ssl::SSLObjective& ct,
                           const ssl::SSLObjective& kd, const StrategyConfig& config) {
  const int64_t n = batch.view1.rank() > 0 ? batch.view1.dim(0) : 0;
  if (n < 2) throw std::invalid_argument("train_step: batches need at least two rows");
  if (static_cast<int64_t>(batch.labels.size()) != n || static_cast<int64_t>(batch.labelled.size()) != n) {
    throw std::invalid_argument("train_step: label arrays do not match the batch size");
  }
  if (state.task_index > 1 && !state.has_previous()) {
    throw TrainingError("train_step: task " + std::to_string(state.task_index) +
                        " requires a frozen snapshot of the previous task");
  }
  const bool distill = state.task_index > 1 && config.strategy != Strategy::kNoDistill;
  const bool distill_classifier = distill && config.strategy == Strategy::kKaizen;

  StepGraph g;
  g.paths = forward_paths(state, batch.view1, batch.view2, config.classifier_input, distill);
  g.terms.kd_fe = distill ? kd.loss(g.paths.p_kd, g.paths.z_previous) : zero_scalar();
  if (!distill_classifier) {
    g.terms.kd_c = zero_scalar();
  } else if (config.distill_targets == DistillTargets::kAllClasses) {
    g.terms.kd_c = cross_entropy_soft(g.paths.c_current, ops::softmax_rows(g.paths.c_previous.value()));
  } else {
    if (state.previous_classes.empty()) {
      throw TrainingError("train_step: the previous classifier has no recorded classes to distil");
    }
    const Var old_prev = ops::select_columns(g.paths.c_previous, state.previous_classes);
    g.terms.kd_c = cross_entropy_soft(ops::select_columns(g.paths.c_current, state.previous_classes),
                                      ops::softmax_rows(old_prev.value()));
  }
  g.terms.ct_c = config.strategy == Strategy::kKaizen ? cross_entropy_hard(g.paths.c_current, batch.labels, batch.labelled)
                                                      : zero_scalar();
  g.terms.ct_fe = ct.loss(g.paths.p_ssl, g.paths.z_target);
  g.total = combine_losses(g.terms, config.weights, &g.breakdown);
  return g;
}

namespace {

std::string diagnostic_dump(const StepGraph& g, const StepBatch& batch, const StepContext& where,
                            const ModelState& state) {
  std::ostringstream os;
  os.precision(17);
  os << "non-finite loss at task " << where.task << ", epoch " << where.epoch << ", step " << where.step << '\n'
     << "  kd_fe=" << g.breakdown.kd_fe << " kd_c=" << g.breakdown.kd_c << " ct_c=" << g.breakdown.ct_c
     << " ct_fe=" << g.breakdown.ct_fe << " total=" << g.breakdown.total << '\n';
  int64_t labelled = 0;
  int64_t replay = 0;
  for (size_t i = 0; i < batch.labelled.size(); ++i) {
    labelled += batch.labelled[i];
    replay += batch.replay.empty() ? 0 : batch.replay[i];
  }
  os << "  batch rows=" << batch.labels.size() << " labelled=" << labelled << " replay=" << replay << '\n';
  auto scan = [&os](const Var& v, const char* name) {
    if (!v.defined()) return;
    int64_t bad = 0;
    double max_abs = 0.0;
    for (double x : v.value().values()) {
      if (!std::isfinite(x)) ++bad;
      else max_abs = std::max(max_abs, std::abs(x));
    }
    os << "  " << name << ": non-finite=" << bad << " max|x|=" << max_abs << '\n';
  };
  scan(g.paths.z_online, "z_online");
  scan(g.paths.z_target, "z_target");
  scan(g.paths.p_kd, "p_kd");
  scan(g.paths.p_ssl, "p_ssl");
  scan(g.paths.c_current, "c_current");
  scan(g.paths.z_previous, "z_previous");
  for (const auto& p : state.trainable_parameters(true)) {
    for (double x : p.var.value().values()) {
      if (!std::isfinite(x)) {
        os << "  parameter " << p.name << " holds non-finite values\n";
        break;
      }
    }
  }
  return os.str();
}

}  // namespace

LossBreakdown train_step(ModelState& state, const StepBatch& batch, ssl::SSLObjective& ct, ssl::SSLObjective& kd,
                         const StrategyConfig& config, optim::Optimizer& optimizer, const StepContext& where) {
  StepGraph g = build_step_graph(state, batch, ct, kd, config);
  if (!std::isfinite(g.breakdown.total) || !std::isfinite(g.breakdown.kd_fe) || !std::isfinite(g.breakdown.kd_c) ||
      !std::isfinite(g.breakdown.ct_c) || !std::isfinite(g.breakdown.ct_fe)) {
    throw TrainingError(diagnostic_dump(g, batch, where, state));
  }
  optimizer.zero_grad();
  backward(g.total);
  optimizer.step();
  if (state.momentum) ema_update(state, ct.hyper().ema_momentum);
  if (ssl::uses_queue(ct.kind())) {
    ct.queue_update(g.paths.z_target.value());
    if (g.paths.z_previous.defined()) kd.queue_update(g.paths.z_previous.value());
  }
  return g.breakdown;
}

std::string loss_record_to_json(const LossRecord& r) {
  nlohmann::json j;
  j["task"] = r.where.task;
  j["epoch"] = r.where.epoch;
  j["step"] = r.where.step;
  j["kd_fe"] = r.loss.kd_fe;
  j["kd_c"] = r.loss.kd_c;
  j["ct_c"] = r.loss.ct_c;
  j["ct_fe"] = r.loss.ct_fe;
  j["weights"] = {{"kd_fe", r.loss.weights.kd_fe},
                  {"kd_c", r.loss.weights.kd_c},
                  {"ct_c", r.loss.weights.ct_c},
                  {"ct_fe", r.loss.weights.ct_fe}};
  j["total"] = r.loss.total;
  j["lr"] = r.learning_rate;
  return j.dump();
}

void train_task(ModelState& state, const TaskData& task, const Dataset& dataset, ReplayBuffer& buffer,
                ssl::SSLObjective& ct, ssl::SSLObjective& kd, const StrategyConfig& config, Rng& rng,
                const LossSink& sink) {
  config.validate();
  const int64_t epochs = config.effective_epochs();
  std::vector<int32_t> seen = state.seen_classes;
  seen.insert(seen.end(), task.classes.begin(), task.classes.end());
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  state.seen_classes = std::move(seen);
  if (epochs == 0) return;
  if (task.samples.empty()) throw DataError("train_task: task " + std::to_string(task.task_index) + " has no samples");
  for (int64_t t : buffer.ingested_tasks()) {
    if (t >= task.task_index) {
      throw std::logic_error("train_task: buffer already holds task " + std::to_string(t) + " while training task " +
                             std::to_string(task.task_index));
    }
  }

  std::vector<uint8_t> is_labelled(static_cast<size_t>(dataset.train.size()), 0);
  for (int64_t s : task.labelled) is_labelled[static_cast<size_t>(s)] = 1;

  const auto n = static_cast<int64_t>(task.samples.size());
  const int64_t rows = std::max<int64_t>(1, buffer.current_rows(config.batch_size));
  const int64_t steps_per_epoch = (n + rows - 1) / rows;
  optim::Optimizer optimizer(state.trainable_parameters(config.strategy == Strategy::kKaizen), config.optimizer,
                             epochs * steps_per_epoch);

  int64_t step = 0;
  for (int64_t epoch = 0; epoch < epochs; ++epoch) {
    const std::vector<int64_t> order = rng.permutation(n);
    for (int64_t begin = 0; begin < n; begin += rows) {
      const int64_t end = std::min(n, begin + rows);
      std::vector<BatchItem> items;
      for (int64_t i = begin; i < end; ++i) {
        const int64_t s = task.samples[static_cast<size_t>(order[static_cast<size_t>(i)])];
        items.push_back({s, dataset.train.labels[static_cast<size_t>(s)], is_labelled[static_cast<size_t>(s)] != 0, false,
                         task.task_index});
      }
      std::vector<BatchItem> mixed = buffer.mix_batch(std::move(items), config.batch_size);
      if (mixed.size() < 2) continue;
      const StepBatch batch = make_step_batch(mixed, dataset.train, config.augmentation, rng);
      const double lr = optimizer.current_learning_rate();
      const StepContext where{task.task_index, epoch, step};
      const LossBreakdown loss = train_step(state, batch, ct, kd, config, optimizer, where);
      if (sink) sink({where, loss, lr});
      ++step;
    }
  }
}

namespace {

// One pass of minibatch SGD over fixed classifier inputs.
double classifier_epoch(nn::Sequential& classifier, const Tensor& features, const std::vector<int32_t>& labels,
                        int64_t batch_size, optim::Optimizer& optimizer, Rng& rng) {
  const int64_t n = features.dim(0);
  const int64_t d = features.numel() / n;
  const std::vector<int64_t> order = rng.permutation(n);
  double loss_sum = 0.0;
  int64_t batches = 0;
  for (int64_t begin = 0; begin < n; begin += batch_size) {
    const int64_t end = std::min(n, begin + batch_size);
    Tensor x({end - begin, d});
    std::vector<int32_t> y;
    for (int64_t i = begin; i < end; ++i) {
      const int64_t r = order[static_cast<size_t>(i)];
      std::copy_n(features.data() + r * d, d, x.data() + (i - begin) * d);
      y.push_back(labels[static_cast<size_t>(r)]);
    }
    const Var logits = classifier.forward(Var::constant(std::move(x)), nn::NormMode::kTrain);
    const Var loss = cross_entropy_hard(logits, y, std::vector<uint8_t>(y.size(), 1));
    optimizer.zero_grad();
    backward(loss);
    optimizer.step();
    loss_sum += loss.value()[0];
    ++batches;
  }
  return batches ? loss_sum / static_cast<double>(batches) : 0.0;
}

}  // namespace

double fit_classifier_on_features(nn::Sequential& classifier, const Tensor& features,
                                  const std::vector<int32_t>& labels, int64_t epochs, int64_t batch_size,
                                  const optim::OptimizerSettings& settings, Rng& rng) {
  if (features.rank() < 2 || features.dim(0) == 0) throw std::invalid_argument("fit_classifier_on_features: no inputs");
  if (static_cast<int64_t>(labels.size()) != features.dim(0)) {
    throw std::invalid_argument("fit_classifier_on_features: label count mismatch");
  }
  const int64_t n = features.dim(0);
  const int64_t steps = epochs * ((n + batch_size - 1) / batch_size);
  optim::Optimizer optimizer(classifier.parameters("classifier."), settings, std::max<int64_t>(steps, 1));
  double last = 0.0;
  for (int64_t e = 0; e < epochs; ++e) last = classifier_epoch(classifier, features, labels, batch_size, optimizer, rng);
  return last;
}

void fit_classifier_posthoc(ModelState& state, const TaskData& task, const Dataset& dataset,
                            const ReplayBuffer& buffer, const StrategyConfig& config, Rng& rng) {
  if (config.strategy == Strategy::kKaizen) {
    throw std::logic_error("fit_classifier_posthoc: kaizen trains its classifier jointly");
  }
  if (task.labelled.empty()) {
    throw DataError("fit_classifier_posthoc: task " + std::to_string(task.task_index) + " has no labelled samples");
  }
  std::vector<int64_t> samples(task.labelled.begin(), task.labelled.end());
  for (const auto& e : buffer.entries()) samples.push_back(e.sample);
  std::vector<int32_t> labels;
  for (int64_t s : samples) labels.push_back(dataset.train.labels[static_cast<size_t>(s)]);

  state.classifier =
      build_classifier(state.feature_dim(), state.spec.classifier_hidden, state.spec.num_outputs, rng);

  const auto n = static_cast<int64_t>(samples.size());
  const int64_t bs = std::max<int64_t>(2, config.batch_size);
  const ImageSet& images = dataset.train;
  auto features_of = [&](bool augment) {
    Tensor out;
    int64_t d = 0;
    for (int64_t begin = 0; begin < n; begin += bs) {
      const int64_t end = std::min(n, begin + bs);
      std::vector<Tensor> batch;
      for (int64_t i = begin; i < end; ++i) {
        const auto img = images.image(samples[static_cast<size_t>(i)]);
        batch.push_back(augment ? ssl::augment(img, images.height, images.width, config.augmentation, rng)
                                : ssl::preprocess(img, images.height, images.width, config.augmentation));
      }
      const Tensor f = extract_features(state.current, ssl::stack_images(batch));
      if (out.empty()) {
        d = f.numel() / f.dim(0);
        out = Tensor({n, d});
      }
      std::copy_n(f.data(), f.numel(), out.data() + begin * d);
    }
    return out;
  };

  const int64_t steps = config.posthoc_epochs * ((n + bs - 1) / bs);
  optim::Optimizer optimizer(state.classifier.parameters("classifier."), config.posthoc_optimizer,
                             std::max<int64_t>(steps, 1));
  Tensor clean;
  if (!config.posthoc_augment) clean = features_of(false);
  for (int64_t e = 0; e < config.posthoc_epochs; ++e) {
    if (config.posthoc_augment) {
      const Tensor f = features_of(true);
      classifier_epoch(state.classifier, f, labels, bs, optimizer, rng);
    } else {
      classifier_epoch(state.classifier, clean, labels, bs, optimizer, rng);
    }
  }
}

namespace {

constexpr uint64_t kTaskStream = 0x7a5c0000ULL;
constexpr uint64_t kCtQueueStream = 0xc7ULL;
constexpr uint64_t kKdQueueStream = 0x6dULL;
constexpr uint64_t kReplayStream = 0x4e91a7ULL;

void check_outputs(const TaskStream& stream, const ArchitectureSpec& arch) {
  if (!stream.dataset) throw std::invalid_argument("task stream has no dataset");
  if (stream.num_tasks() < 1) throw std::invalid_argument("task stream has no tasks");
  if (arch.num_outputs < stream.dataset->num_classes) {
    throw ConfigError("classifier has " + std::to_string(arch.num_outputs) + " outputs but the dataset has " +
                      std::to_string(stream.dataset->num_classes) + " classes");
  }
}

// The first-task procedure shared by continual runs and single-task models.
struct RunParts {
  ModelState state;
  ssl::SSLObjective ct;
  ssl::SSLObjective kd;
};

RunParts make_run_parts(const ArchitectureSpec& arch, ssl::SSLKind kind, const ssl::SSLHyperparameters& hyper,
                        uint64_t seed) {
  return {init_model(arch, kind, seed), ssl::SSLObjective(kind, hyper, arch.projector_dim, derive_seed(seed, kCtQueueStream)),
          ssl::SSLObjective(kind, hyper, arch.projector_dim, derive_seed(seed, kKdQueueStream))};
}

}  // namespace

ContinualResult run_continual(const TaskStream& stream, const ArchitectureSpec& arch, ssl::SSLKind kind,
                              const StrategyConfig& config, const ContinualOptions& options, uint64_t seed) {
  check_outputs(stream, arch);
  config.validate();
  const Dataset& dataset = *stream.dataset;
  RunParts parts = make_run_parts(arch, kind, options.ssl, seed);
  ReplayBuffer buffer(options.replay_fraction, options.min_per_batch, derive_seed(seed, kReplayStream));
  AccuracyMatrix matrix(stream.num_tasks());

  for (int64_t t = 1; t <= stream.num_tasks(); ++t) {
    const TaskData& task = stream.task(t);
    Rng rng(derive_seed(seed, kTaskStream + static_cast<uint64_t>(t)));
    train_task(parts.state, task, dataset, buffer, parts.ct, parts.kd, config, rng, options.sink);
    if (config.strategy != Strategy::kKaizen) fit_classifier_posthoc(parts.state, task, dataset, buffer, config, rng);
    const auto acc = evaluate_model(parts.state, std::span<const TaskData>(stream.tasks.data(), static_cast<size_t>(t)),
                                    dataset, config.augmentation);
    for (int64_t k = 1; k <= t; ++k) matrix.set(t, k, acc[static_cast<size_t>(k - 1)]);
    if (options.on_task_end) options.on_task_end(t, parts.state, buffer);
    if (t < stream.num_tasks()) {
      snapshot_previous(parts.state);
      buffer.update(task, dataset);
    }
  }
  return {std::move(matrix), std::move(parts.state), std::move(buffer)};
}

uint64_t single_task_seed(uint64_t seed, int64_t task_index) {
  if (task_index < 1) throw std::invalid_argument("single_task_seed: task index must be >= 1");
  return task_index == 1 ? seed : derive_seed(seed, 0x5157a5c0ULL + static_cast<uint64_t>(task_index));
}

std::vector<double> run_single_task_baselines(const TaskStream& stream, const ArchitectureSpec& arch,
                                              ssl::SSLKind kind, const StrategyConfig& config,
                                              const ContinualOptions& options, uint64_t seed) {
  check_outputs(stream, arch);
  config.validate();
  const Dataset& dataset = *stream.dataset;
  std::vector<double> out;
  for (int64_t k = 1; k <= stream.num_tasks(); ++k) {
    const uint64_t seed_k = single_task_seed(seed, k);
    RunParts parts = make_run_parts(arch, kind, options.ssl, seed_k);
    ReplayBuffer empty(0.0, options.min_per_batch, derive_seed(seed_k, kReplayStream));
    const TaskData& task = stream.task(k);
    Rng rng(derive_seed(seed_k, kTaskStream + 1));
    train_task(parts.state, task, dataset, empty, parts.ct, parts.kd, config, rng, {});
    if (config.strategy != Strategy::kKaizen) fit_classifier_posthoc(parts.state, task, dataset, empty, config, rng);
    out.push_back(evaluate_model(parts.state, std::span<const TaskData>(&task, 1), dataset, config.augmentation).front());
  }
  return out;
}

}  // namespace kaizen
