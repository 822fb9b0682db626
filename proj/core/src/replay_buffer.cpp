// SPDX-License-Identifier: Apache-2.0

#include "kaizen/replay_buffer.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "kaizen/errors.hpp"
#include "kaizen/rng.hpp"

namespace kaizen {

ReplayBuffer::ReplayBuffer(double fraction, int64_t min_per_batch, uint64_t seed)
    : fraction_(fraction), min_per_batch_(min_per_batch), seed_(seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("replay fraction must lie in [0, 1]");
  if (min_per_batch < 1) throw std::invalid_argument("min_per_batch must be >= 1");
}

void ReplayBuffer::update(const TaskData& task, const Dataset& dataset) {
  if (ingested_.count(task.task_index)) {
    throw std::invalid_argument("replay buffer already ingested task " + std::to_string(task.task_index));
  }
  ingested_.insert(task.task_index);
  const int64_t budget = rounded_share(fraction_, static_cast<int64_t>(task.labelled.size()));
  if (budget == 0) return;

  std::map<int32_t, std::vector<int64_t>> by_class;
  for (int64_t s : task.labelled) by_class[dataset.train.labels.at(static_cast<size_t>(s))].push_back(s);
  std::vector<int64_t> counts;
  for (const auto& [c, samples] : by_class) counts.push_back(static_cast<int64_t>(samples.size()));
  const auto quota = stratified_quota(counts, budget);

  Rng rng(derive_seed(seed_, 0x7e91a000 + static_cast<uint64_t>(task.task_index)));
  std::vector<ReplayEntry> added;
  size_t k = 0;
  for (auto& [c, samples] : by_class) {
    rng.shuffle(samples);
    for (int64_t i = 0; i < quota[k]; ++i) added.push_back({samples[static_cast<size_t>(i)], c, task.task_index});
    ++k;
  }
  std::sort(added.begin(), added.end(), [](const auto& a, const auto& b) { return a.sample < b.sample; });
  entries_.insert(entries_.end(), added.begin(), added.end());
  cursor_ = 0;
  reshuffle();
}

void ReplayBuffer::reshuffle() {
  Rng rng(derive_seed(seed_, 0x9a55000000ULL + static_cast<uint64_t>(pass_)));
  order_ = rng.permutation(size());
}

ReplayEntry ReplayBuffer::next_entry() {
  if (cursor_ >= size()) {
    // Exhausted: start a new pass with a fresh permutation.
    ++pass_;
    cursor_ = 0;
    reshuffle();
  }
  if (static_cast<int64_t>(order_.size()) != size()) reshuffle();
  return entries_[static_cast<size_t>(order_[static_cast<size_t>(cursor_++)])];
}

int64_t ReplayBuffer::current_rows(int64_t batch_size) const {
  return empty() ? batch_size : batch_size - min_per_batch_;
}

std::vector<BatchItem> ReplayBuffer::mix_batch(std::vector<BatchItem> current, int64_t batch_size) {
  if (empty()) return current;
  if (batch_size <= min_per_batch_) {
    throw std::invalid_argument("batch_size " + std::to_string(batch_size) + " must exceed min_per_batch " +
                                std::to_string(min_per_batch_) + " when replaying");
  }
  const int64_t keep = std::min<int64_t>(static_cast<int64_t>(current.size()), batch_size - min_per_batch_);
  current.resize(static_cast<size_t>(keep));
  while (static_cast<int64_t>(current.size()) < batch_size) {
    const ReplayEntry e = next_entry();
    current.push_back({e.sample, e.label, true, true, e.source_task});
  }
  return current;
}

std::string ReplayBuffer::to_json() const {
  nlohmann::json j;
  j["fraction"] = fraction_;
  j["min_per_batch"] = min_per_batch_;
  j["seed"] = seed_;
  j["cursor"] = cursor_;
  j["pass"] = pass_;
  j["ingested_tasks"] = std::vector<int64_t>(ingested_.begin(), ingested_.end());
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : entries_) rows.push_back({e.sample, e.label, e.source_task});
  j["entries"] = rows;
  return j.dump(1);
}

ReplayBuffer ReplayBuffer::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ReplayBuffer b(j.at("fraction").get<double>(), j.at("min_per_batch").get<int64_t>(), j.at("seed").get<uint64_t>());
    for (const auto& row : j.at("entries")) {
      b.entries_.push_back({row.at(0).get<int64_t>(), row.at(1).get<int32_t>(), row.at(2).get<int64_t>()});
    }
    for (int64_t t : j.at("ingested_tasks").get<std::vector<int64_t>>()) b.ingested_.insert(t);
    b.pass_ = j.at("pass").get<int64_t>();
    b.reshuffle();
    b.cursor_ = j.at("cursor").get<int64_t>();
    if (b.cursor_ < 0 || b.cursor_ > b.size()) throw DataError("replay index: cursor out of range");
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("replay index: ") + e.what());
  }
}

bool ReplayBuffer::operator==(const ReplayBuffer& other) const {
  return entries_ == other.entries_ && fraction_ == other.fraction_ && min_per_batch_ == other.min_per_batch_ &&
         seed_ == other.seed_ && cursor_ == other.cursor_ && pass_ == other.pass_ && ingested_ == other.ingested_;
}

}  // namespace kaizen
