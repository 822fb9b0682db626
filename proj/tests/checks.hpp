// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks. Each returns pass/fail plus a one-line summary of the
// measured quantities; the unit tests assert on them and the acceptance
// binary prints them.

#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "kaizen/eval_metrics.hpp"
#include "kaizen/experiment.hpp"
#include "kaizen/kaizen_trainer.hpp"
#include "kaizen/model_zoo.hpp"
#include "kaizen/ops.hpp"
#include "kaizen/optim.hpp"
#include "kaizen/rng.hpp"
#include "kaizen/ssl_objectives.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace checks {

struct Outcome {
  bool pass = false;
  std::string detail;
};

inline std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

// ------------------------------------------------------------------ metrics

inline Outcome metric_oracle(int count = 1000, uint64_t seed = 2024) {
  kaizen::Rng rng(seed);
  double worst = 0.0;
  for (int n = 0; n < count; ++n) {
    const auto T = static_cast<int64_t>(2 + rng.uniform_int(9));  // 2..10
    kaizen::AccuracyMatrix m(T);
    oracle::Matrix acc(static_cast<size_t>(T), std::vector<double>(static_cast<size_t>(T), 0.0));
    std::vector<double> single(static_cast<size_t>(T));
    for (int64_t t = 1; t <= T; ++t) {
      for (int64_t k = 1; k <= t; ++k) {
        const double v = rng.uniform();
        m.set(t, k, v);
        acc[static_cast<size_t>(t - 1)][static_cast<size_t>(k - 1)] = v;
      }
      single[static_cast<size_t>(t - 1)] = rng.uniform();
      m.set_single(t, single[static_cast<size_t>(t - 1)]);
    }
    worst = std::max(worst, std::abs(kaizen::final_accuracy(m) - oracle::final_accuracy(acc)));
    worst = std::max(worst, std::abs(kaizen::continual_accuracy(m) - oracle::continual_accuracy(acc)));
    worst = std::max(worst, std::abs(kaizen::forgetting(m) - oracle::forgetting(acc)));
    worst = std::max(worst, std::abs(kaizen::forward_transfer(m) - oracle::forward_transfer(acc, single)));
  }
  return {worst <= 1e-12, std::to_string(count) + " matrices, T in 2..10, max |diff| = " + fmt("%.3g", worst)};
}

inline Outcome hand_worked_metrics() {
  kaizen::AccuracyMatrix m(2);
  m.set(1, 1, 0.8);
  m.set(2, 1, 0.5);
  m.set(2, 2, 0.7);
  const double fa = kaizen::final_accuracy(m);
  const double ca = kaizen::continual_accuracy(m);
  const double f = kaizen::forgetting(m);
  // Exact decimal expectations, computed the way a reader would by hand.
  const bool ok = fa == (0.5 + 0.7) / 2 && ca == (0.8 + (0.5 + 0.7) / 2) / 2 && f == 0.8 - 0.5 &&
                  std::abs(fa - 0.6) < 1e-15 && std::abs(ca - 0.7) < 1e-15 && std::abs(f - 0.3) < 1e-15;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "FA %.17g, CA %.17g, F %.17g", fa, ca, f);
  return {ok, buf};
}

// ------------------------------------------------------------------ SSL losses

struct GradCheck {
  double value_error = 0.0;
  double grad_error = 0.0;  // max over inputs of |g - fd| / max(|fd|, 1e-3), elementwise
};

inline double relative_grad_error(const kaizen::Tensor& g, const oracle::Matrix& fd) {
  double worst = 0.0;
  for (size_t i = 0; i < fd.size(); ++i) {
    for (size_t j = 0; j < fd[i].size(); ++j) {
      const double a = g.at(static_cast<int64_t>(i), static_cast<int64_t>(j));
      const double b = fd[i][j];
      worst = std::max(worst, std::abs(a - b) / std::max(std::abs(b), 1e-3));
    }
  }
  return worst;
}

// Compares a two-input loss op with its oracle on values and both gradients.
template <typename LossOp, typename OracleFn>
GradCheck check_pair_loss(const oracle::Matrix& a, const oracle::Matrix& b, LossOp op, OracleFn ref) {
  using testing_support::to_tensor;
  kaizen::Var va = kaizen::Var::parameter(to_tensor(a));
  kaizen::Var vb = kaizen::Var::parameter(to_tensor(b));
  kaizen::Var loss = op(va, vb);
  kaizen::backward(loss);
  GradCheck r;
  r.value_error = std::abs(loss.value()[0] - ref(a, b));
  const auto fa = oracle::finite_difference([&](const oracle::Matrix& x) { return ref(x, b); }, a);
  const auto fb = oracle::finite_difference([&](const oracle::Matrix& x) { return ref(a, x); }, b);
  r.grad_error = std::max(relative_grad_error(va.grad(), fa), relative_grad_error(vb.grad(), fb));
  return r;
}

inline Outcome ssl_loss_oracles(int trials = 40, uint64_t seed = 11) {
  namespace ssl = kaizen::ssl;
  kaizen::Rng rng(seed);
  double value_worst = 0.0;
  double grad_worst = 0.0;
  int cases = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const size_t n = 2 + rng.uniform_int(7);   // 2..8
    const size_t d = 2 + rng.uniform_int(15);  // 2..16
    const auto a = testing_support::random_matrix(rng, n, d);
    const auto b = testing_support::random_matrix(rng, n, d);
    const double tau = 0.1 + 0.9 * rng.uniform();

    auto take = [&](const GradCheck& g) {
      value_worst = std::max(value_worst, g.value_error);
      grad_worst = std::max(grad_worst, g.grad_error);
      ++cases;
    };
    take(check_pair_loss(
        a, b, [&](const kaizen::Var& x, const kaizen::Var& y) { return ssl::nt_xent_loss(x, y, tau); },
        [&](const oracle::Matrix& x, const oracle::Matrix& y) { return oracle::nt_xent(x, y, tau); }));

    oracle::Matrix queue;
    const size_t qn = 1 + rng.uniform_int(8);
    for (size_t i = 0; i < qn; ++i) queue.push_back(oracle::normalized(testing_support::random_matrix(rng, 1, d)[0]));
    const kaizen::Tensor qt = testing_support::to_tensor(queue);
    take(check_pair_loss(
        a, b, [&](const kaizen::Var& x, const kaizen::Var& y) { return ssl::info_nce_loss(x, y, qt, tau); },
        [&](const oracle::Matrix& x, const oracle::Matrix& y) { return oracle::info_nce(x, y, queue, tau); }));

    take(check_pair_loss(
        a, b, [](const kaizen::Var& x, const kaizen::Var& y) { return ssl::byol_loss(x, y); },
        [](const oracle::Matrix& x, const oracle::Matrix& y) { return oracle::byol(x, y); }));

    // Scale so that some dimensions sit on each side of the variance hinge.
    const auto va = testing_support::random_matrix(rng, n, d, 0.4 + 1.2 * rng.uniform());
    const auto vb = testing_support::random_matrix(rng, n, d, 0.4 + 1.2 * rng.uniform());
    const ssl::VicregWeights w{25.0, 25.0, 1.0};
    take(check_pair_loss(
        va, vb, [&](const kaizen::Var& x, const kaizen::Var& y) { return ssl::vicreg_loss(x, y, w); },
        [&](const oracle::Matrix& x, const oracle::Matrix& y) { return oracle::vicreg(x, y, 25.0, 25.0, 1.0); }));
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d cases (N<=8, D<=16): max value err %.3g, max grad rel err %.3g", cases,
                value_worst, grad_worst);
  return {value_worst <= 1e-6 && grad_worst <= 1e-4, buf};
}

// ------------------------------------------------------------------ trainer contracts

// Runs task 1 of the tiny setup, snapshots, and returns a state on task 2
// with the objectives used to build it.
struct TaskTwo {
  testing_support::Tiny tiny;
  kaizen::ModelState state;
  std::unique_ptr<kaizen::ssl::SSLObjective> ct;
  std::unique_ptr<kaizen::ssl::SSLObjective> kd;
  kaizen::ReplayBuffer buffer;
};

inline TaskTwo make_task_two(kaizen::ssl::SSLKind kind, uint64_t seed = 5) {
  TaskTwo t{testing_support::make_tiny(kind), {}, nullptr, nullptr, kaizen::ReplayBuffer()};
  t.state = kaizen::init_model(t.tiny.arch, kind, seed);
  t.ct = std::make_unique<kaizen::ssl::SSLObjective>(kind, t.tiny.options.ssl, t.tiny.arch.projector_dim, seed + 1);
  t.kd = std::make_unique<kaizen::ssl::SSLObjective>(kind, t.tiny.options.ssl, t.tiny.arch.projector_dim, seed + 2);
  t.buffer = kaizen::ReplayBuffer(t.tiny.options.replay_fraction, t.tiny.options.min_per_batch, seed + 3);
  kaizen::Rng rng(seed + 4);
  const auto& task1 = t.tiny.stream.task(1);
  kaizen::train_task(t.state, task1, *t.tiny.dataset, t.buffer, *t.ct, *t.kd, t.tiny.config, rng);
  kaizen::snapshot_previous(t.state);
  t.buffer.update(task1, *t.tiny.dataset);
  return t;
}

inline kaizen::StepBatch task_two_batch(TaskTwo& t, uint64_t seed = 9) {
  const auto& task2 = t.tiny.stream.task(2);
  std::vector<kaizen::BatchItem> items;
  for (size_t i = 0; i < 6 && i < task2.samples.size(); ++i) {
    const int64_t s = task2.samples[i];
    items.push_back({s, t.tiny.dataset->train.labels[static_cast<size_t>(s)], true, false, 2});
  }
  auto mixed = t.buffer.mix_batch(items, t.tiny.config.batch_size);
  kaizen::Rng rng(seed);
  return kaizen::make_step_batch(mixed, t.tiny.dataset->train, t.tiny.config.augmentation, rng);
}

// With only the classifier terms active, backprop leaves every extractor
// gradient absent or exactly zero, and a train_step without weight decay
// leaves the extractor bitwise unchanged.
inline Outcome stop_gradient() {
  namespace ssl = kaizen::ssl;
  int checked = 0;
  int nonzero = 0;
  bool classifier_moved = true;
  bool unchanged = true;
  for (auto kind : {ssl::SSLKind::kSimCLR, ssl::SSLKind::kMoCoV2Plus, ssl::SSLKind::kBYOL, ssl::SSLKind::kVICReg}) {
    for (auto input : {kaizen::ClassifierInput::kCurrentView1, kaizen::ClassifierInput::kMomentumView2}) {
      if (input == kaizen::ClassifierInput::kMomentumView2 && !ssl::uses_momentum_encoder(kind)) continue;
      TaskTwo t = make_task_two(kind);
      kaizen::StrategyConfig config = t.tiny.config;
      config.weights = {0.0, 2.0, 1.0, 0.0};
      config.classifier_input = input;
      const kaizen::StepBatch batch = task_two_batch(t);

      auto graph = kaizen::build_step_graph(t.state, batch, *t.ct, *t.kd, config);
      kaizen::backward(graph.total);
      for (const auto& p : t.state.current.parameters("f")) {
        ++checked;
        if (!p.var.has_grad()) continue;
        for (double g : p.var.grad().values()) nonzero += g != 0.0;
      }
      double cls_grad = 0.0;
      for (const auto& p : t.state.classifier.parameters()) {
        if (p.var.has_grad()) cls_grad += p.var.grad().matrix().squaredNorm();
      }
      classifier_moved = classifier_moved && cls_grad > 0.0;
      for (const auto& p : t.state.trainable_parameters(true)) p.var.node()->grad = kaizen::Tensor();

      const uint64_t before = t.state.current.checksum();
      kaizen::StrategyConfig no_decay = config;
      no_decay.optimizer.weight_decay = 0.0;
      kaizen::optim::Optimizer opt(t.state.trainable_parameters(true), no_decay.optimizer, 10);
      kaizen::train_step(t.state, batch, *t.ct, *t.kd, no_decay, opt);
      unchanged = unchanged && t.state.current.checksum() == before;
    }
  }
  return {nonzero == 0 && classifier_moved && unchanged,
          std::to_string(checked) + " extractor tensors checked over 4 SSL kinds; nonzero grad entries " +
              std::to_string(nonzero) + "; extractor bitwise unchanged after train_step: " +
              (unchanged ? "yes" : "no") + "; classifier received gradient: " + (classifier_moved ? "yes" : "no")};
}

inline Outcome frozen_snapshot() {
  TaskTwo t = make_task_two(kaizen::ssl::SSLKind::kBYOL);
  const uint64_t f_before = t.state.previous->checksum();
  const uint64_t g_before = kaizen::nn::parameter_checksum(*t.state.previous_classifier);
  const uint64_t cur_before = t.state.current.checksum();
  kaizen::Rng rng(77);
  int64_t steps = 0;
  kaizen::train_task(t.state, t.tiny.stream.task(2), *t.tiny.dataset, t.buffer, *t.ct, *t.kd, t.tiny.config, rng,
                     [&](const kaizen::LossRecord&) { ++steps; });
  const bool f_same = t.state.previous->checksum() == f_before;
  const bool g_same = kaizen::nn::parameter_checksum(*t.state.previous_classifier) == g_before;
  const bool trained = t.state.current.checksum() != cur_before;
  return {f_same && g_same && trained && steps > 0,
          std::to_string(steps) + " steps on task 2; prev_f checksum " + (f_same ? "unchanged" : "CHANGED") +
              ", prev_g checksum " + (g_same ? "unchanged" : "CHANGED") + ", current extractor " +
              (trained ? "updated" : "not updated")};
}

inline double weighted_total(const kaizen::LossBreakdown& b) {
  double total = 0.0;
  total += b.weights.kd_fe * b.kd_fe;
  total += b.weights.kd_c * b.kd_c;
  total += b.weights.ct_c * b.ct_c;
  total += b.weights.ct_fe * b.ct_fe;
  return total;
}

inline Outcome loss_structure() {
  namespace ssl = kaizen::ssl;
  bool task1_zero = true;
  bool exact = true;
  bool task2_kd = true;
  int64_t records = 0;
  const bool default_weight = kaizen::LossWeights{}.kd_c == 2.0 && kaizen::StrategyConfig{}.weights.kd_c == 2.0;
  for (auto kind : {ssl::SSLKind::kSimCLR, ssl::SSLKind::kMoCoV2Plus, ssl::SSLKind::kBYOL, ssl::SSLKind::kVICReg}) {
    auto tiny = testing_support::make_tiny(kind);
    double kd_seen = 0.0;
    tiny.options.sink = [&](const kaizen::LossRecord& r) {
      ++records;
      if (r.where.task == 1) task1_zero = task1_zero && r.loss.kd_fe == 0.0 && r.loss.kd_c == 0.0;
      if (r.where.task == 2) kd_seen += std::abs(r.loss.kd_fe) + std::abs(r.loss.kd_c);
      exact = exact && r.loss.total == weighted_total(r.loss) && r.loss.weights.kd_c == 2.0;
    };
    kaizen::run_continual(tiny.stream, tiny.arch, kind, tiny.config, tiny.options, 1);
    task2_kd = task2_kd && kd_seen > 0.0;
  }
  return {task1_zero && exact && default_weight && task2_kd,
          std::to_string(records) + " logged steps over 4 SSL kinds; task-1 kd terms zero: " +
              (task1_zero ? "yes" : "no") + "; default kd_c weight 2: " + (default_weight ? "yes" : "no") +
              "; total == weighted sum exactly: " + (exact ? "yes" : "no")};
}

inline Outcome ema_closed_form() {
  namespace ssl = kaizen::ssl;
  auto tiny = testing_support::make_tiny(ssl::SSLKind::kBYOL);
  kaizen::ModelState state = kaizen::init_model(tiny.arch, ssl::SSLKind::kBYOL, 3);
  // Move the momentum copy away from the online net first.
  kaizen::Rng rng(8);
  const auto online = state.current.parameters("f");
  const auto momentum = state.momentum->parameters("f");
  for (const auto& p : momentum) {
    kaizen::Var v = p.var;
    for (double& x : v.mutable_value().values()) x += rng.normal(0.0, 0.5);
  }
  std::vector<kaizen::Tensor> start;
  for (const auto& p : momentum) start.push_back(p.var.value());
  const double m = 0.9;
  const int k = 25;
  for (int i = 0; i < k; ++i) kaizen::ema_update(state, m);
  const double mk = std::pow(m, k);
  double worst = 0.0;
  for (size_t i = 0; i < momentum.size(); ++i) {
    const auto& got = momentum[i].var.value();
    const auto& cur = online[i].var.value();
    for (int64_t j = 0; j < got.numel(); ++j) {
      const double expected = start[i][j] * mk + cur[j] * (1.0 - mk);
      worst = std::max(worst, std::abs(got[j] - expected));
    }
  }
  return {worst <= 1e-6, std::to_string(k) + " EMA steps at m = 0.9 over " + std::to_string(momentum.size()) +
                             " tensors, max |diff| = " + fmt("%.3g", worst)};
}

// ------------------------------------------------------------------ desk-scale runs

struct SeedMetrics {
  std::vector<double> fa;
  std::vector<double> f;
};

// Continual runs of the desk preset for each seed, without touching disk.
inline SeedMetrics desk_runs(kaizen::Strategy strategy, double replay_fraction, const std::vector<uint64_t>& seeds) {
  const kaizen::ExperimentConfig c = testing_support::desk_config(strategy, replay_fraction);
  auto dataset = kaizen::load_dataset(c);
  const auto partition = kaizen::split_classes(dataset->num_classes, c.num_tasks, c.partition_seed);
  const auto stream = kaizen::build_stream(dataset, partition, c.label_fraction, c.partition_seed);
  kaizen::ContinualOptions opts;
  opts.replay_fraction = c.replay_fraction;
  opts.min_per_batch = c.min_per_batch;
  opts.ssl = c.ssl;
  SeedMetrics out;
  for (uint64_t s : seeds) {
    const auto r = kaizen::run_continual(stream, c.architecture, c.ssl_kind, c.training, opts, s);
    out.fa.push_back(kaizen::final_accuracy(r.matrix));
    out.f.push_back(kaizen::forgetting(r.matrix));
  }
  return out;
}

inline std::pair<double, double> mean_pstd(const std::vector<double>& v) {
  const auto s = kaizen::summarize(v);
  return {s.mean, s.stddev};
}

// Margins must exceed the larger of the two methods' population stds.
inline Outcome desk_direction(const SeedMetrics& kaizen_runs, const SeedMetrics& baseline) {
  const auto [fa_k, fa_k_sd] = mean_pstd(kaizen_runs.fa);
  const auto [fa_b, fa_b_sd] = mean_pstd(baseline.fa);
  const auto [f_k, f_k_sd] = mean_pstd(kaizen_runs.f);
  const auto [f_b, f_b_sd] = mean_pstd(baseline.f);
  const double fa_margin = fa_k - fa_b;
  const double f_margin = f_b - f_k;
  const double fa_sd = std::max(fa_k_sd, fa_b_sd);
  const double f_sd = std::max(f_k_sd, f_b_sd);
  char buf[320];
  std::snprintf(buf, sizeof(buf),
                "%zu seeds; FA kaizen %.3f+/-%.3f vs no_distill %.3f+/-%.3f (margin %.3f, std %.3f); "
                "F kaizen %.3f+/-%.3f vs no_distill %.3f+/-%.3f (margin %.3f, std %.3f)",
                kaizen_runs.fa.size(), fa_k, fa_k_sd, fa_b, fa_b_sd, fa_margin, fa_sd, f_k, f_k_sd, f_b, f_b_sd,
                f_margin, f_sd);
  const bool ok = kaizen_runs.fa.size() >= 3 && fa_margin > fa_sd && f_margin > f_sd;
  return {ok, buf};
}

inline Outcome replay_direction(const SeedMetrics& with_replay, const SeedMetrics& without_replay) {
  const auto [f10, f10_sd] = mean_pstd(with_replay.f);
  const auto [f0, f0_sd] = mean_pstd(without_replay.f);
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%zu seeds; mean F at replay 10%% %.3f+/-%.3f vs 0%% %.3f+/-%.3f",
                with_replay.f.size(), f10, f10_sd, f0, f0_sd);
  return {with_replay.f.size() >= 3 && f10 <= f0, buf};
}

// Same config and seed twice through the full experiment driver.
inline Outcome end_to_end_determinism(const std::filesystem::path& root) {
  kaizen::ExperimentConfig c = kaizen::preset("desk2");
  c.training.epoch_scale = 0.01;
  c.training.posthoc_epochs = 3;
  c.seeds = {4};
  c.output_dir = (root / "runs").string();
  c.save_checkpoints = false;
  c.single_task_baselines = false;
  const auto first = kaizen::run_experiment(c, {false, true});
  const auto csv_path = first.directory / "seed_4" / "accuracy_matrix.csv";
  const std::string a = kaizen::read_text_file(csv_path);
  const auto second = kaizen::run_experiment(c, {true, true});
  const std::string b = kaizen::read_text_file(csv_path);
  const bool same_dir = first.directory == second.directory;
  return {a == b && same_dir && !a.empty(),
          "run " + first.hash + " twice with seed 4: accuracy_matrix.csv " + std::to_string(a.size()) + " bytes, " +
              (a == b ? "byte-identical" : "DIFFERENT")};
}

}  // namespace checks
