// SPDX-License-Identifier: Apache-2.0
//
// Class-incremental task sequences. Classes are split into equally sized,
// disjoint groups; each task exposes every training sample of its classes as
// unlabelled data, a class-stratified labelled subset, and the held-out test
// samples of its classes. Tasks are numbered from 1.

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "kaizen/dataset.hpp"

namespace kaizen {

struct ClassPartition {
  int64_t num_classes = 0;
  int64_t num_tasks = 0;
  uint64_t seed = 0;
  std::vector<int64_t> assignment;  // class id -> task index (1-based)

  std::vector<int32_t> classes_of(int64_t task_index) const;
  int64_t classes_per_task() const { return num_tasks == 0 ? 0 : num_classes / num_tasks; }
  bool operator==(const ClassPartition&) const = default;
};

ClassPartition split_classes(int64_t num_classes, int64_t num_tasks, uint64_t seed);

// JSON document: {"seed", "num_tasks", "num_classes", "assignment": [...]}.
std::string partition_to_json(const ClassPartition& partition);
ClassPartition partition_from_json(const std::string& text);

struct TaskData {
  int64_t task_index = 0;
  std::vector<int32_t> classes;   // sorted
  std::vector<int64_t> samples;   // training indices of the task (unlabelled view)
  std::vector<int64_t> labelled;  // sorted subset of `samples` whose labels are visible
  std::vector<int64_t> test;      // test-split indices
  double label_fraction = 1.0;

  bool owns_class(int32_t class_id) const;
};

struct TaskStream {
  std::shared_ptr<const Dataset> dataset;
  ClassPartition partition;
  std::vector<TaskData> tasks;

  int64_t num_tasks() const { return static_cast<int64_t>(tasks.size()); }
  const TaskData& task(int64_t task_index) const { return tasks.at(static_cast<size_t>(task_index - 1)); }
};

TaskStream build_stream(std::shared_ptr<const Dataset> dataset, const ClassPartition& partition,
                        double label_fraction, uint64_t seed);

// Splits `total` across groups proportionally to `counts` by largest
// remainder (ties to the lower index). When total >= number of non-empty
// groups, every non-empty group receives at least one. Never exceeds a
// group's count.
std::vector<int64_t> stratified_quota(const std::vector<int64_t>& counts, int64_t total);

// Round half away from zero of fraction * count.
int64_t rounded_share(double fraction, int64_t count);

}  // namespace kaizen
