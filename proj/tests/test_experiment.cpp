// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "kaizen/errors.hpp"
#include "kaizen/experiment.hpp"
#include "kaizen/plotting.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using testing_support::TempDir;

namespace {

// A run of two seeds that finishes in well under a second.
kaizen::ExperimentConfig tiny_config(const fs::path& out) {
  kaizen::ExperimentConfig c = kaizen::preset("desk2");
  c.name = "tiny";
  c.dataset.synthetic.num_classes = 4;
  c.dataset.synthetic.train_per_class = 10;
  c.dataset.synthetic.test_per_class = 4;
  c.dataset.synthetic.image_size = 8;
  c.dataset.image_size = 8;
  c.architecture.image_size = 8;
  c.architecture.mlp_hidden = {16};
  c.architecture.projector_hidden = 16;
  c.architecture.projector_dim = 8;
  c.architecture.predictor_hidden = 16;
  c.architecture.classifier_hidden = 8;
  c.architecture.num_outputs = 4;
  c.training.epochs_per_task = 2;
  c.training.epoch_scale = 1.0;
  c.training.batch_size = 8;
  c.training.posthoc_epochs = 1;
  c.training.augmentation = kaizen::ssl::AugmentationPolicy::defaults(8);
  c.ssl.queue_size = 16;
  c.min_per_batch = 2;
  c.seeds = {0, 1};
  c.output_dir = out.string();
  return c;
}

int run_cli(const std::string& args) {
#ifdef KAIZEN_CLI_PATH
  const std::string cmd = std::string("\"") + KAIZEN_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
#else
  (void)args;
  return -1;
#endif
}

}  // namespace

TEST_SUITE("experiment_cli") {

TEST_CASE("config JSON round trip and stable hash") {
  for (const auto& name : kaizen::preset_names()) {
    const auto c = kaizen::preset(name);
    const auto text = kaizen::config_to_json(c);
    const auto back = kaizen::config_from_json(text);
    CHECK(kaizen::config_to_json(back) == text);
    CHECK(kaizen::config_hash(back) == kaizen::config_hash(c));
    CHECK(kaizen::config_hash(c).size() == 16);
    CHECK(kaizen::validate_config(c).empty());
  }
  CHECK_THROWS_AS(kaizen::preset("huge"), kaizen::ConfigError);
}

TEST_CASE("hash changes with every experiment-relevant field") {
  const auto base = kaizen::preset("desk2");
  const auto h = kaizen::config_hash(base);
  auto a = base;
  a.replay_fraction = 0.05;
  auto b = base;
  b.training.strategy = kaizen::Strategy::kCassle;
  auto c = base;
  c.seeds = {0, 1};
  auto d = base;
  d.ssl.temperature = 0.3;
  auto e = base;
  e.training.weights.kd_c = 1.0;
  for (const auto& v : {a, b, c, d, e}) CHECK(kaizen::config_hash(v) != h);
}

TEST_CASE("missing keys take defaults; unknown keys and type errors are all reported") {
  const auto c = kaizen::config_from_json(R"({"num_tasks": 10})");
  CHECK(c.num_tasks == 10);
  CHECK(c.replay_fraction == kaizen::full_config().replay_fraction);
  try {
    kaizen::config_from_json(R"({"num_taskz": 2, "replay_fraction": "lots", "ssl": {"tau": 0.1}})");
    FAIL("expected ConfigError");
  } catch (const kaizen::ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("num_taskz") != std::string::npos);
    CHECK(msg.find("replay_fraction") != std::string::npos);
    CHECK(msg.find("tau") != std::string::npos);
  }
  CHECK_THROWS_AS(kaizen::config_from_json("[1, 2"), kaizen::ConfigError);
}

TEST_CASE("validate_config itemises every violation") {
  auto c = kaizen::preset("desk2");
  c.num_tasks = 3;  // 10 classes do not split into 3 tasks
  c.replay_fraction = 1.5;
  c.seeds.clear();
  const auto problems = kaizen::validate_config(c);
  CHECK(problems.size() >= 3);
}

TEST_CASE("tiny experiment writes a complete run directory") {
  TempDir tmp("exp");
  const auto config = tiny_config(tmp.path);
  REQUIRE(kaizen::validate_config(config).empty());
  const auto summary = kaizen::run_experiment(config, {false, true});
  const fs::path dir = tmp.path / summary.hash;
  CHECK(summary.directory == dir);
  CHECK(summary.seeds.size() == 2);
  for (const char* f : {"config.json", "partition.json", "manifest.json", "summary.json", "summary.txt"}) {
    CHECK(fs::is_regular_file(dir / f));
  }
  for (const char* s : {"seed_0", "seed_1"}) {
    for (const char* f : {"accuracy_matrix.csv", "accuracy_matrix.json", "single_task.csv", "metrics.json",
                          "loss_log.jsonl", "replay_buffer.json", "checkpoints/task_1.ckpt", "checkpoints/task_2.ckpt"}) {
      CHECK_MESSAGE(fs::is_regular_file(dir / s / f), s << "/" << f);
    }
  }
  CHECK(kaizen::validate_run_directory(dir).empty());
  CHECK(json::parse(kaizen::read_text_file(dir / "manifest.json"))["status"] == "complete");

  // Summary statistics are the population mean and std over seeds.
  std::vector<double> fa;
  for (const auto& s : summary.seeds) fa.push_back(s.metrics.final_accuracy);
  const double mean = (fa[0] + fa[1]) / 2.0;
  CHECK(summary.metrics.at("FA").mean == doctest::Approx(mean).epsilon(1e-15));
  CHECK(summary.metrics.at("FA").stddev == doctest::Approx(std::abs(fa[0] - fa[1]) / 2.0).epsilon(1e-12));
  CHECK(summary.metrics.at("FT").count == 2);

  const auto loaded = kaizen::load_run(dir);
  CHECK(loaded.hash == summary.hash);
  CHECK(loaded.seeds.size() == 2);
  CHECK(loaded.metrics.at("F").mean == summary.metrics.at("F").mean);

  CHECK_THROWS_AS(kaizen::run_experiment(config, {false, true}), kaizen::RunExistsError);
  const auto again = kaizen::run_experiment(config, {true, true});
  CHECK(kaizen::read_text_file(dir / "seed_1" / "accuracy_matrix.csv") == again.seeds[1].matrix.to_csv());
  CHECK(again.seeds[1].matrix.to_csv() == summary.seeds[1].matrix.to_csv());

  fs::remove(dir / "seed_0" / "metrics.json");
  const auto problems = kaizen::validate_run_directory(dir);
  CHECK(problems.size() == 1);
}

TEST_CASE("a diverging run leaves FAILED markers and partial artifacts") {
  TempDir tmp("fail");
  auto config = tiny_config(tmp.path);
  config.seeds = {0};
  config.training.optimizer.learning_rate = 1e250;
  config.single_task_baselines = false;
  CHECK_THROWS(kaizen::run_experiment(config, {false, true}));
  const fs::path dir = tmp.path / kaizen::config_hash(config);
  CHECK(fs::is_regular_file(dir / "FAILED"));
  CHECK(fs::is_regular_file(dir / "seed_0" / "FAILED"));
  CHECK(fs::is_regular_file(dir / "config.json"));
  CHECK(json::parse(kaizen::read_text_file(dir / "manifest.json"))["status"] == "failed");
  CHECK_FALSE(kaizen::validate_run_directory(dir).empty());
}

TEST_CASE("relative output_dir resolves against KAIZEN_OUTPUT_ROOT") {
  TempDir tmp("env");
  auto config = tiny_config("nested");
  ::setenv("KAIZEN_OUTPUT_ROOT", tmp.path.c_str(), 1);
  CHECK(kaizen::resolve_output_root(config) == tmp.path / "nested");
  ::unsetenv("KAIZEN_OUTPUT_ROOT");
  CHECK(kaizen::resolve_output_root(config) == fs::path("nested"));
}

TEST_CASE("missing dataset files raise DataError") {
  auto c = kaizen::full_config();
  c.dataset.path = "/nonexistent/cifar";
  CHECK_THROWS_AS(kaizen::load_dataset(c), kaizen::DataError);
}

TEST_CASE("summarize uses the population standard deviation") {
  const auto s = kaizen::summarize({0.2, 0.4, 0.6});
  CHECK(s.mean == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(s.stddev == doctest::Approx(std::sqrt(0.08 / 3.0)).epsilon(1e-12));
  CHECK(s.count == 3);
}

TEST_CASE("figures: curve lengths, per-task offsets and the replay sweep") {
  TempDir tmp("plots");
  std::vector<kaizen::RunSummary> runs;
  for (double f : {0.0, 0.10}) {
    auto c = tiny_config(tmp.path);
    c.seeds = {0};
    c.replay_fraction = f;
    c.single_task_baselines = false;
    c.save_checkpoints = false;
    runs.push_back(kaizen::run_experiment(c, {false, true}));
  }
  const auto avg = kaizen::plot::average_chart(runs);
  REQUIRE(avg.series.size() == 2);
  CHECK(avg.series[0].x.size() == 2);
  const auto per = kaizen::plot::per_task_charts(runs);
  REQUIRE(per.size() == 2);
  REQUIRE(per[0].series.size() == 2);
  CHECK(per[0].series[0].x.front() == 1.0);
  CHECK(per[0].series[1].x.front() == 2.0);
  CHECK(per[0].series[1].x.size() == 1);

  const auto bar = kaizen::plot::replay_chart(runs, {0.0, 0.10});
  CHECK(bar.categories.size() == 2);
  CHECK(bar.groups.size() == 4);
  CHECK_THROWS_AS(kaizen::plot::replay_chart(runs, {0.0, 0.01, 0.05, 0.10}), kaizen::DataError);

  const auto figs = kaizen::plot::make_figures(kaizen::plot::PlotKind::kAverage, runs);
  REQUIRE(figs.size() == 1);
  CHECK(figs[0].file_name == "average.svg");
  CHECK(figs[0].svg.find("<svg") == 0);
  CHECK_THROWS_AS(kaizen::plot::plot_kind_from_string("pie"), kaizen::ConfigError);
}

TEST_CASE("CLI exit codes") {
#ifndef KAIZEN_CLI_PATH
  MESSAGE("CLI not built; skipped");
#else
  TempDir tmp("cli");
  const auto cfg = tmp.path / "tiny.json";
  auto c = tiny_config(tmp.path / "out");
  c.seeds = {0};
  kaizen::write_text_file(cfg, kaizen::config_to_json(c));
  const std::string p = "'" + cfg.string() + "'";
  CHECK(run_cli("") == 1);
  CHECK(run_cli("frobnicate") == 1);
  CHECK(run_cli("validate-config " + p) == 0);
  CHECK(run_cli("run --config " + p + " --quiet") == 0);
  CHECK(run_cli("run --config " + p + " --quiet") == 5);
  CHECK(run_cli("run --config " + p + " --quiet --force") == 0);
  CHECK(run_cli("validate-config --run '" + (tmp.path / "out" / kaizen::config_hash(c)).string() + "'") == 0);
  CHECK(run_cli("plot --kind bar --out '" + (tmp.path / "fig").string() + "' '" + (tmp.path / "out").string() + "'") == 0);
  CHECK(fs::is_regular_file(tmp.path / "fig" / "metrics_bar.svg"));

  const auto bad = tmp.path / "bad.json";
  kaizen::write_text_file(bad, R"({"num_tasks": 0})");
  CHECK(run_cli("validate-config '" + bad.string() + "'") == 2);
  CHECK(run_cli("run --config '" + bad.string() + "' --quiet") == 2);
  CHECK(run_cli("run --preset nope --quiet") == 2);

  const auto csv = tmp.path / "broken.csv";
  kaizen::write_text_file(csv, "after_task,task_1,task_2\n1,0.5\n");
  CHECK(run_cli("metrics '" + csv.string() + "'") == 3);
  const auto good = tmp.path / "m.csv";
  kaizen::write_text_file(good, "after_task,task_1,task_2\n1,0.9,\n2,0.7,0.8\n");
  CHECK(run_cli("metrics '" + good.string() + "' --out '" + (tmp.path / "met").string() + "'") == 0);
  CHECK(fs::is_regular_file(tmp.path / "met" / "m.metrics.json"));
  CHECK(run_cli("make-config --preset desk5 --out '" + (tmp.path / "d5.json").string() + "'") == 0);
  CHECK(kaizen::config_hash(kaizen::load_config(tmp.path / "d5.json")) == kaizen::config_hash(kaizen::preset("desk5")));
#endif
}

}  // TEST_SUITE
