// SPDX-License-Identifier: Apache-2.0
//
// Labelled memory of past tasks. After each task a class-stratified fraction
// of that task's labelled samples is appended; entries are never modified
// afterwards. Every training batch taken while the buffer is non-empty
// reserves at least `min_per_batch` rows for replayed samples, cycling
// through the buffer in seeded per-pass permutations so that replay counts
// differ by at most one between entries.

#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "kaizen/dataset.hpp"
#include "kaizen/task_stream.hpp"

namespace kaizen {

struct ReplayEntry {
  int64_t sample = 0;  // training-split index
  int32_t label = 0;
  int64_t source_task = 0;
  bool operator==(const ReplayEntry&) const = default;
};

// One row of a training batch.
struct BatchItem {
  int64_t sample = 0;
  int32_t label = -1;
  bool labelled = false;
  bool replay = false;
  int64_t source_task = 0;
};

class ReplayBuffer {
 public:
  static constexpr int64_t kDefaultMinPerBatch = 32;

  explicit ReplayBuffer(double fraction = 0.01, int64_t min_per_batch = kDefaultMinPerBatch, uint64_t seed = 0);

  // Appends round(fraction * |task.labelled|) entries; rejects a task that
  // was already ingested.
  void update(const TaskData& task, const Dataset& dataset);

  // Returns exactly `batch_size` rows when the buffer is non-empty: the
  // leading current rows followed by max(min_per_batch, batch_size -
  // |current|) replay rows. An empty buffer returns `current` unchanged.
  std::vector<BatchItem> mix_batch(std::vector<BatchItem> current, int64_t batch_size);

  // Number of current-task rows the trainer should draw per batch.
  int64_t current_rows(int64_t batch_size) const;

  const std::vector<ReplayEntry>& entries() const { return entries_; }
  int64_t size() const { return static_cast<int64_t>(entries_.size()); }
  bool empty() const { return entries_.empty(); }
  double fraction() const { return fraction_; }
  int64_t min_per_batch() const { return min_per_batch_; }
  int64_t cursor() const { return cursor_; }
  int64_t pass() const { return pass_; }
  const std::set<int64_t>& ingested_tasks() const { return ingested_; }

  // Index file: sample references plus seed and cursor position.
  std::string to_json() const;
  static ReplayBuffer from_json(const std::string& text);

  bool operator==(const ReplayBuffer& other) const;

 private:
  ReplayEntry next_entry();
  void reshuffle();

  std::vector<ReplayEntry> entries_;
  double fraction_;
  int64_t min_per_batch_;
  uint64_t seed_;
  int64_t cursor_ = 0;
  int64_t pass_ = 0;
  std::vector<int64_t> order_;
  std::set<int64_t> ingested_;
};

}  // namespace kaizen
