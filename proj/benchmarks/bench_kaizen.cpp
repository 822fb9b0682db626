// SPDX-License-Identifier: Apache-2.0
//
// Micro benchmarks for the hot paths: SSL losses with backward, a 3x3
// convolution, and one full joint training step on the desk architecture.

#include <benchmark/benchmark.h>

#include "kaizen/autograd.hpp"
#include "kaizen/experiment.hpp"
#include "kaizen/ops.hpp"
#include "kaizen/ssl_objectives.hpp"
#include "support.hpp"

namespace {

kaizen::Tensor random_tensor(kaizen::Shape shape, uint64_t seed) {
  kaizen::Rng rng(seed);
  kaizen::Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.normal();
  return t;
}

void BM_SSLLoss(benchmark::State& state) {
  const auto kind = static_cast<kaizen::ssl::SSLKind>(state.range(0));
  const int64_t n = state.range(1);
  kaizen::ssl::SSLHyperparameters hyper = kaizen::ssl::SSLHyperparameters::defaults(kind);
  hyper.queue_size = 4096;
  kaizen::ssl::SSLObjective obj(kind, hyper, 64, 1);
  if (kaizen::ssl::uses_queue(kind)) {
    for (int i = 0; i < 4096 / 256; ++i) obj.queue_update(random_tensor({256, 64}, 10 + i));
  }
  const auto a = random_tensor({n, 64}, 1);
  const auto b = random_tensor({n, 64}, 2);
  for (auto _ : state) {
    kaizen::Var x = kaizen::Var::parameter(a);
    auto loss = obj.loss(x, kaizen::Var::constant(b));
    kaizen::backward(loss);
    benchmark::DoNotOptimize(x.grad().data());
  }
  state.SetLabel(kaizen::ssl::to_string(kind));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_SSLLoss)->ArgsProduct({{0, 1, 2, 3}, {64, 256}})->Unit(benchmark::kMicrosecond);

void BM_Conv3x3(benchmark::State& state) {
  const int64_t c = state.range(0);
  const auto x = random_tensor({32, c, 16, 16}, 3);
  const auto w = random_tensor({c, c, 3, 3}, 4);
  const kaizen::Tensor bias({c});
  for (auto _ : state) {
    kaizen::Var wv = kaizen::Var::parameter(w);
    auto y = kaizen::ops::conv2d(kaizen::Var::constant(x), wv, kaizen::Var::constant(bias), {});
    kaizen::backward(kaizen::ops::sum(y));
    benchmark::DoNotOptimize(wv.grad().data());
  }
}
BENCHMARK(BM_Conv3x3)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

// One train_step at task 2 (all four loss terms active) with the desk2
// architecture and batch size.
void BM_TrainStep(benchmark::State& state) {
  const auto cfg = kaizen::preset("desk2");
  auto dataset = kaizen::load_dataset(cfg);
  const auto stream =
      kaizen::build_stream(dataset, kaizen::split_classes(dataset->num_classes, cfg.num_tasks, 0), 1.0, 0);
  auto model = kaizen::init_model(cfg.architecture, cfg.ssl_kind, 1);
  model.seen_classes = stream.task(1).classes;
  kaizen::snapshot_previous(model);
  kaizen::ssl::SSLObjective ct(cfg.ssl_kind, cfg.ssl, cfg.architecture.projector_dim, 2);
  kaizen::ssl::SSLObjective kd(cfg.ssl_kind, cfg.ssl, cfg.architecture.projector_dim, 3);
  kaizen::optim::Optimizer opt(model.trainable_parameters(true), cfg.training.optimizer, 1000000);
  std::vector<kaizen::BatchItem> items;
  const auto& task = stream.task(2);
  for (int64_t i = 0; i < cfg.training.batch_size; ++i) {
    const int64_t s = task.samples[static_cast<size_t>(i)];
    items.push_back({s, dataset->train.labels[static_cast<size_t>(s)], true, false, 2});
  }
  kaizen::Rng rng(5);
  const auto batch = kaizen::make_step_batch(items, dataset->train, cfg.training.augmentation, rng);
  for (auto _ : state) {
    auto loss = kaizen::train_step(model, batch, ct, kd, cfg.training, opt);
    benchmark::DoNotOptimize(loss.total);
  }
  state.SetItemsProcessed(state.iterations() * cfg.training.batch_size);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
