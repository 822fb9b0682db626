// SPDX-License-Identifier: Apache-2.0

#include "kaizen/task_stream.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "kaizen/errors.hpp"
#include "kaizen/rng.hpp"

namespace kaizen {

std::vector<int32_t> ClassPartition::classes_of(int64_t task_index) const {
  std::vector<int32_t> out;
  for (size_t c = 0; c < assignment.size(); ++c) {
    if (assignment[c] == task_index) out.push_back(static_cast<int32_t>(c));
  }
  return out;
}

ClassPartition split_classes(int64_t num_classes, int64_t num_tasks, uint64_t seed) {
  if (num_tasks < 1) throw std::invalid_argument("split_classes: num_tasks must be >= 1");
  if (num_classes < 1) throw std::invalid_argument("split_classes: num_classes must be >= 1");
  if (num_tasks > num_classes) {
    throw std::invalid_argument("split_classes: " + std::to_string(num_tasks) + " tasks exceed " +
                                std::to_string(num_classes) + " classes");
  }
  if (num_classes % num_tasks != 0) {
    throw std::invalid_argument("split_classes: " + std::to_string(num_classes) + " classes cannot be split equally into " +
                                std::to_string(num_tasks) + " tasks");
  }
  ClassPartition p;
  p.num_classes = num_classes;
  p.num_tasks = num_tasks;
  p.seed = seed;
  p.assignment.assign(static_cast<size_t>(num_classes), 0);
  Rng rng(derive_seed(seed, 0x5a17));
  const auto order = rng.permutation(num_classes);
  const int64_t per_task = num_classes / num_tasks;
  for (int64_t i = 0; i < num_classes; ++i) p.assignment[static_cast<size_t>(order[i])] = i / per_task + 1;
  return p;
}

std::string partition_to_json(const ClassPartition& partition) {
  nlohmann::json j;
  j["seed"] = partition.seed;
  j["num_tasks"] = partition.num_tasks;
  j["num_classes"] = partition.num_classes;
  j["assignment"] = partition.assignment;
  return j.dump(2);
}

ClassPartition partition_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("partition JSON: ") + e.what());
  }
  ClassPartition p;
  try {
    p.seed = j.at("seed").get<uint64_t>();
    p.num_tasks = j.at("num_tasks").get<int64_t>();
    p.assignment = j.at("assignment").get<std::vector<int64_t>>();
    p.num_classes = j.value("num_classes", static_cast<int64_t>(p.assignment.size()));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("partition JSON: ") + e.what());
  }
  if (static_cast<int64_t>(p.assignment.size()) != p.num_classes || p.num_tasks < 1 ||
      p.num_classes % p.num_tasks != 0) {
    throw DataError("partition JSON: inconsistent sizes");
  }
  std::vector<int64_t> per_task(static_cast<size_t>(p.num_tasks), 0);
  for (int64_t t : p.assignment) {
    if (t < 1 || t > p.num_tasks) throw DataError("partition JSON: task index out of range");
    ++per_task[static_cast<size_t>(t - 1)];
  }
  for (int64_t n : per_task) {
    if (n != p.classes_per_task()) throw DataError("partition JSON: unequal task sizes");
  }
  return p;
}

bool TaskData::owns_class(int32_t class_id) const {
  return std::binary_search(classes.begin(), classes.end(), class_id);
}

int64_t rounded_share(double fraction, int64_t count) {
  return static_cast<int64_t>(std::llround(fraction * static_cast<double>(count)));
}

std::vector<int64_t> stratified_quota(const std::vector<int64_t>& counts, int64_t total) {
  const int64_t n = std::accumulate(counts.begin(), counts.end(), int64_t{0});
  if (total < 0 || total > n) throw std::invalid_argument("stratified_quota: total outside [0, sum(counts)]");
  std::vector<int64_t> quota(counts.size(), 0);
  if (n == 0 || total == 0) return quota;
  std::vector<std::pair<double, size_t>> remainders;
  int64_t assigned = 0;
  for (size_t i = 0; i < counts.size(); ++i) {
    // Exact integer arithmetic keeps the split platform independent.
    const int64_t num = total * counts[i];
    quota[i] = num / n;
    assigned += quota[i];
    remainders.emplace_back(static_cast<double>(num % n), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (size_t k = 0; assigned < total; ++k, ++assigned) ++quota[remainders[k % remainders.size()].second];

  const auto non_empty = std::count_if(counts.begin(), counts.end(), [](int64_t c) { return c > 0; });
  if (total >= non_empty) {
    for (size_t i = 0; i < counts.size(); ++i) {
      if (counts[i] == 0 || quota[i] > 0) continue;
      // Take one from the group with the largest quota.
      const auto donor = static_cast<size_t>(std::max_element(quota.begin(), quota.end()) - quota.begin());
      --quota[donor];
      ++quota[i];
    }
  }
  return quota;
}

TaskStream build_stream(std::shared_ptr<const Dataset> dataset, const ClassPartition& partition,
                        double label_fraction, uint64_t seed) {
  if (!dataset) throw std::invalid_argument("build_stream: null dataset");
  if (!(label_fraction > 0.0 && label_fraction <= 1.0)) {
    throw std::invalid_argument("build_stream: label_fraction must lie in (0, 1]");
  }
  if (dataset->num_classes != partition.num_classes) {
    throw DataError("build_stream: dataset has " + std::to_string(dataset->num_classes) + " classes, partition expects " +
                    std::to_string(partition.num_classes));
  }
  validate_dataset(*dataset);

  std::vector<std::vector<int64_t>> train_by_class(static_cast<size_t>(partition.num_classes));
  for (int64_t i = 0; i < dataset->train.size(); ++i) train_by_class[dataset->train.labels[i]].push_back(i);
  std::vector<std::vector<int64_t>> test_by_class(static_cast<size_t>(partition.num_classes));
  for (int64_t i = 0; i < dataset->test.size(); ++i) test_by_class[dataset->test.labels[i]].push_back(i);

  TaskStream stream;
  stream.dataset = dataset;
  stream.partition = partition;
  for (int64_t t = 1; t <= partition.num_tasks; ++t) {
    TaskData task;
    task.task_index = t;
    task.label_fraction = label_fraction;
    task.classes = partition.classes_of(t);
    if (task.classes.empty()) throw DataError("build_stream: task " + std::to_string(t) + " has no classes");
    std::vector<int64_t> counts;
    for (int32_t c : task.classes) {
      const auto& tr = train_by_class[c];
      task.samples.insert(task.samples.end(), tr.begin(), tr.end());
      task.test.insert(task.test.end(), test_by_class[c].begin(), test_by_class[c].end());
      counts.push_back(static_cast<int64_t>(tr.size()));
    }
    if (task.samples.empty()) throw DataError("build_stream: task " + std::to_string(t) + " is empty");
    std::sort(task.samples.begin(), task.samples.end());
    std::sort(task.test.begin(), task.test.end());

    const int64_t budget = rounded_share(label_fraction, static_cast<int64_t>(task.samples.size()));
    const auto quota = stratified_quota(counts, budget);
    Rng rng(derive_seed(seed, 0x1abe1000 + static_cast<uint64_t>(t)));
    for (size_t k = 0; k < task.classes.size(); ++k) {
      std::vector<int64_t> pool = train_by_class[task.classes[k]];
      rng.shuffle(pool);
      task.labelled.insert(task.labelled.end(), pool.begin(), pool.begin() + quota[k]);
    }
    std::sort(task.labelled.begin(), task.labelled.end());
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

}  // namespace kaizen
