// SPDX-License-Identifier: Apache-2.0
//
// Continual-learning metric suite over the lower-triangular accuracy matrix
// A(t, k): accuracy on task k after training on task t (1-based, k <= t),
// optionally with single-task accuracies A'(k, k).
//
//   FA = 1/T sum_i A(T, i)
//   CA = 1/T sum_i 1/i sum_{j <= i} A(i, j)
//   F  = 1/(T-1) sum_{i < T} (max_t A(t, i) - A(T, i))
//   FT = 1/(T-1) sum_{i >= 2} (A(i, i) - A'(i, i))

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kaizen/augment.hpp"
#include "kaizen/dataset.hpp"
#include "kaizen/model_zoo.hpp"
#include "kaizen/task_stream.hpp"

namespace kaizen {

class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;
  explicit AccuracyMatrix(int64_t num_tasks);

  int64_t num_tasks() const { return num_tasks_; }

  void set(int64_t after_task, int64_t task, double accuracy);
  bool has(int64_t after_task, int64_t task) const;
  // Throws std::out_of_range when the cell is empty.
  double at(int64_t after_task, int64_t task) const;

  void set_single(int64_t task, double accuracy);
  bool has_single() const;
  double single(int64_t task) const;

  int64_t populated() const;
  bool complete() const { return populated() == num_tasks_ * (num_tasks_ + 1) / 2; }

  // Header `after_task,task_1..task_T`, one row per training step, empty
  // cells for unseen tasks.
  std::string to_csv() const;
  static AccuracyMatrix from_csv(const std::string& text);
  // Header `task,single_task_accuracy`.
  std::string single_to_csv() const;
  void single_from_csv(const std::string& text);

  // {"num_tasks", "accuracy": [[A(1,1)], [A(2,1), A(2,2)], ...], "single_task": [...] | null}
  std::string to_json() const;
  static AccuracyMatrix from_json(const std::string& text);

  bool operator==(const AccuracyMatrix&) const = default;

 private:
  void check_cell(int64_t after_task, int64_t task) const;

  int64_t num_tasks_ = 0;
  std::vector<std::optional<double>> cells_;   // row-major T x T
  std::vector<std::optional<double>> single_;  // T
};

double final_accuracy(const AccuracyMatrix& m);
double continual_accuracy(const AccuracyMatrix& m);
double forgetting(const AccuracyMatrix& m);
double forward_transfer(const AccuracyMatrix& m);

struct MetricsReport {
  int64_t num_tasks = 0;
  double final_accuracy = 0.0;
  double continual_accuracy = 0.0;
  std::optional<double> forgetting;        // needs T >= 2
  std::optional<double> forward_transfer;  // needs T >= 2 and A'
  std::map<int64_t, std::vector<double>> per_task_curves;  // k -> A(t, k), t >= k
  std::vector<double> average_seen;                         // t -> mean_k<=t A(t, k)
};

MetricsReport compute_metrics(const AccuracyMatrix& m);
std::string metrics_to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const std::string& text);

struct TableRow {
  std::string ssl;
  std::string method;
  std::optional<double> fa, ca, f, ft;
};

// Fixed-width text table with columns SSL, Method, FA, CA, F, FT; values
// are printed with three decimals, missing values as "-".
std::string render_metrics_table(std::span<const TableRow> rows);

// Mean over the task's classes of per-class accuracy.
double macro_accuracy(std::span<const int32_t> predictions, std::span<const int32_t> labels,
                      std::span<const int32_t> classes);

// Per-task macro accuracy of the single all-class head on each task's test
// split, without task labels.
std::vector<double> evaluate_model(ModelState& state, std::span<const TaskData> tasks, const Dataset& dataset,
                                   const ssl::AugmentationPolicy& policy, int64_t batch_size = 256);

}  // namespace kaizen
