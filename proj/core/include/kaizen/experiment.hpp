// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration, orchestration and on-disk artifacts.
//
// Layout of one run (hash = config_hash(config)):
//
//   <output_dir>/<hash>/config.json       canonical config snapshot
//   <output_dir>/<hash>/partition.json    class -> task assignment
//   <output_dir>/<hash>/manifest.json     hash, seeds, status, build info
//   <output_dir>/<hash>/summary.json      mean and population std over seeds
//   <output_dir>/<hash>/summary.txt       text table
//   <output_dir>/<hash>/seed_<s>/accuracy_matrix.{csv,json}
//                               single_task.csv     (when FT is requested)
//                               metrics.json, loss_log.jsonl, replay_buffer.json
//                               checkpoints/task_<t>.ckpt
//                               FAILED              (only after a failure)

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kaizen/dataset.hpp"
#include "kaizen/eval_metrics.hpp"
#include "kaizen/kaizen_trainer.hpp"
#include "kaizen/model_zoo.hpp"
#include "kaizen/ssl_objectives.hpp"

namespace kaizen {

struct DatasetConfig {
  // "synthetic", "cifar10", "cifar100", "image_folder" or "indexed".
  std::string id = "cifar100";
  std::string path;  // relative paths resolve against KAIZEN_DATA_ROOT
  int64_t image_size = 32;
  SyntheticSpec synthetic;

  bool operator==(const DatasetConfig&) const = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetConfig dataset;
  int64_t num_tasks = 5;
  uint64_t partition_seed = 0;  // shared by every strategy and seed
  double label_fraction = 1.0;
  double replay_fraction = 0.01;
  int64_t min_per_batch = ReplayBuffer::kDefaultMinPerBatch;

  ssl::SSLKind ssl_kind = ssl::SSLKind::kMoCoV2Plus;
  ssl::SSLHyperparameters ssl = ssl::SSLHyperparameters::defaults(ssl::SSLKind::kMoCoV2Plus);
  ArchitectureSpec architecture;
  StrategyConfig training;

  bool single_task_baselines = true;  // needed for FT
  bool save_checkpoints = true;
  std::vector<uint64_t> seeds{0};
  std::string output_dir = "runs";  // relative paths resolve against KAIZEN_OUTPUT_ROOT
};

// Full-scale defaults for CIFAR-100, 5 tasks.
ExperimentConfig full_config();
// Names accepted by preset(): "full", "desk2", "desk5".
std::vector<std::string> preset_names();
ExperimentConfig preset(const std::string& name);

std::string config_to_json(const ExperimentConfig& config);
// Missing keys take the defaults of the chosen SSL kind and of full_config();
// unknown keys and type errors are reported together as one ConfigError.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Every violated constraint, empty when valid. Does not touch the dataset.
std::vector<std::string> validate_config(const ExperimentConfig& config);

// FNV-1a over the canonical JSON form, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

std::filesystem::path resolve_data_path(const ExperimentConfig& config);
std::filesystem::path resolve_output_root(const ExperimentConfig& config);

// Throws DataError when the dataset is missing or malformed.
std::shared_ptr<const Dataset> load_dataset(const ExperimentConfig& config);

struct SeedResult {
  uint64_t seed = 0;
  AccuracyMatrix matrix;
  MetricsReport metrics;
};

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // population
  int64_t count = 0;
};

struct RunSummary {
  std::string hash;
  ExperimentConfig config;
  std::vector<SeedResult> seeds;
  std::map<std::string, MetricSummary> metrics;  // "FA", "CA", "F", "FT"
  std::filesystem::path directory;
};

MetricSummary summarize(const std::vector<double>& values);
RunSummary summarize_run(std::string hash, ExperimentConfig config, std::vector<SeedResult> seeds);
std::string summary_to_json(const RunSummary& summary);
std::string summary_table(const std::vector<RunSummary>& runs);

class RunExistsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunOptions {
  bool force = false;
  bool quiet = false;
};

// Runs every seed and persists the artifacts. Throws RunExistsError when
// the hash directory already exists and force is false. On failure the
// partial artifacts are kept, FAILED is written, and the error is rethrown.
RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// Missing or invalid artifacts of a finished run directory; empty when the
// directory is complete.
std::vector<std::string> validate_run_directory(const std::filesystem::path& directory);

// Reads a run directory written by run_experiment.
RunSummary load_run(const std::filesystem::path& directory);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace kaizen
