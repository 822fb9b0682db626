// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <map>

#include "kaizen/replay_buffer.hpp"
#include "kaizen/task_stream.hpp"

namespace {

struct Setup {
  std::shared_ptr<const kaizen::Dataset> ds;
  kaizen::TaskStream stream;
};

// 10 classes x 100 samples, 2 tasks of 500 samples over 5 classes.
Setup setup() {
  kaizen::SyntheticSpec s;
  s.train_per_class = 100;
  s.test_per_class = 2;
  s.image_size = 8;
  Setup out;
  out.ds = std::make_shared<const kaizen::Dataset>(kaizen::make_synthetic_dataset(s));
  out.stream = kaizen::build_stream(out.ds, kaizen::split_classes(10, 2, 0), 1.0, 0);
  return out;
}

std::vector<kaizen::BatchItem> current(int64_t n) {
  std::vector<kaizen::BatchItem> items;
  for (int64_t i = 0; i < n; ++i) items.push_back({i, 0, true, false, 2});
  return items;
}

kaizen::TaskData task_of(std::vector<int64_t> samples, int64_t index) {
  kaizen::TaskData t;
  t.task_index = index;
  t.samples = samples;
  t.labelled = samples;
  return t;
}

}  // namespace

TEST_SUITE("replay_buffer") {

TEST_CASE("fraction 0.10 of a 500-sample 5-class task: 50 entries, 10 per class") {
  auto s = setup();
  kaizen::ReplayBuffer buf(0.10, 32, 1);
  buf.update(s.stream.task(1), *s.ds);
  CHECK(buf.size() == 50);
  std::map<int32_t, int> per_class;
  for (const auto& e : buf.entries()) {
    ++per_class[e.label];
    CHECK(e.source_task == 1);
    CHECK(s.stream.task(1).owns_class(e.label));
  }
  CHECK(per_class.size() == 5);
  for (const auto& [c, n] : per_class) CHECK(n == 10);
}

TEST_CASE("fraction 0.01 of a 10,000-sample task gives 100 entries") {
  kaizen::SyntheticSpec s;
  s.num_classes = 20;
  s.train_per_class = 500;
  s.test_per_class = 1;
  s.image_size = 8;
  const auto ds = kaizen::make_synthetic_dataset(s);
  std::vector<int64_t> all(static_cast<size_t>(ds.train.size()));
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int64_t>(i);
  kaizen::ReplayBuffer buf(0.01, 32, 1);
  buf.update(task_of(all, 1), ds);
  CHECK(buf.size() == 100);
}

TEST_CASE("fraction 0 leaves the buffer empty and batches untouched") {
  auto s = setup();
  kaizen::ReplayBuffer buf(0.0, 32, 1);
  buf.update(s.stream.task(1), *s.ds);
  CHECK(buf.empty());
  const auto items = current(40);
  const auto mixed = buf.mix_batch(items, 64);
  CHECK(mixed.size() == 40);
}

TEST_CASE("duplicate ingestion is rejected and entries are append-only") {
  auto s = setup();
  kaizen::ReplayBuffer buf(0.1, 32, 1);
  buf.update(s.stream.task(1), *s.ds);
  const auto first = buf.entries();
  CHECK_THROWS(buf.update(s.stream.task(1), *s.ds));
  buf.update(s.stream.task(2), *s.ds);
  REQUIRE(buf.size() == 100);
  for (size_t i = 0; i < first.size(); ++i) CHECK(buf.entries()[i] == first[i]);
}

TEST_CASE("mix_batch: exact size, at least min_per_batch replay rows") {
  auto s = setup();
  kaizen::ReplayBuffer buf(0.2, 32, 2);
  buf.update(s.stream.task(1), *s.ds);  // 100 entries
  for (int64_t n : {0, 10, 224, 256}) {
    const auto mixed = buf.mix_batch(current(n), 256);
    CHECK(mixed.size() == 256);
    int64_t replay = 0;
    for (const auto& it : mixed) replay += it.replay;
    CHECK(replay >= 32);
    CHECK(replay == std::max<int64_t>(32, 256 - n));
  }
  CHECK(buf.current_rows(256) == 224);
  CHECK_THROWS(buf.mix_batch(current(4), 32));
}

TEST_CASE("buffer of 40, three batches of 256: wrap-around, each entry 2 or 3 times") {
  kaizen::SyntheticSpec spec;
  spec.num_classes = 4;
  spec.train_per_class = 100;
  spec.test_per_class = 1;
  spec.image_size = 8;
  const auto ds = kaizen::make_synthetic_dataset(spec);
  std::vector<int64_t> all(400);
  for (size_t i = 0; i < 400; ++i) all[i] = static_cast<int64_t>(i);
  kaizen::ReplayBuffer buf(0.1, 32, 3);
  buf.update(task_of(all, 1), ds);
  REQUIRE(buf.size() == 40);
  std::map<int64_t, int> seen;
  for (int b = 0; b < 3; ++b) {
    for (const auto& it : buf.mix_batch(current(224), 256)) {
      if (it.replay) ++seen[it.sample];
    }
  }
  // 96 replay rows over 40 entries: ceil(96 / 40) = 3, floor = 2.
  CHECK(seen.size() == 40);
  for (const auto& [sample, n] : seen) CHECK((n == 2 || n == 3));
}

TEST_CASE("fair cycling over many batches") {
  auto s = setup();
  kaizen::ReplayBuffer buf(0.07, 5, 4);
  buf.update(s.stream.task(1), *s.ds);
  std::map<int64_t, int> seen;
  for (int b = 0; b < 37; ++b) {
    for (const auto& it : buf.mix_batch(current(11), 16)) {
      if (it.replay) ++seen[it.sample];
    }
  }
  int lo = 1 << 30, hi = 0;
  for (const auto& [k, n] : seen) {
    lo = std::min(lo, n);
    hi = std::max(hi, n);
  }
  CHECK(static_cast<int64_t>(seen.size()) == buf.size());
  CHECK(hi - lo <= 1);
}

TEST_CASE("index file round trip keeps cursor and contents") {
  auto s = setup();
  kaizen::ReplayBuffer buf(0.1, 8, 5);
  buf.update(s.stream.task(1), *s.ds);
  (void)buf.mix_batch(current(3), 16);
  auto restored = kaizen::ReplayBuffer::from_json(buf.to_json());
  CHECK(restored == buf);
  const auto a = buf.mix_batch(current(3), 16);
  const auto b = restored.mix_batch(current(3), 16);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].sample == b[i].sample);
}

TEST_CASE("same seed, same contents") {
  auto s = setup();
  kaizen::ReplayBuffer a(0.1, 8, 6), b(0.1, 8, 6), c(0.1, 8, 7);
  a.update(s.stream.task(1), *s.ds);
  b.update(s.stream.task(1), *s.ds);
  c.update(s.stream.task(1), *s.ds);
  CHECK(a.entries() == b.entries());
  CHECK_FALSE(a.entries() == c.entries());
}

}  // TEST_SUITE
