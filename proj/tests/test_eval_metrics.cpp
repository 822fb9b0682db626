// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "checks.hpp"
#include "kaizen/errors.hpp"
#include "kaizen/eval_metrics.hpp"

using kaizen::AccuracyMatrix;

TEST_SUITE("eval_metrics") {

TEST_CASE("all-ones matrix") {
  AccuracyMatrix m(4);
  for (int t = 1; t <= 4; ++t)
    for (int k = 1; k <= t; ++k) m.set(t, k, 1.0);
  CHECK(kaizen::final_accuracy(m) == 1.0);
  CHECK(kaizen::continual_accuracy(m) == 1.0);
  CHECK(kaizen::forgetting(m) == 0.0);
}

TEST_CASE("hand-worked T=2 values") {
  const auto o = checks::hand_worked_metrics();
  INFO(o.detail);
  CHECK(o.pass);
}

TEST_CASE("forward transfer T=3 with diffs +0.1 and -0.3") {
  AccuracyMatrix m(3);
  m.set(1, 1, 0.9);
  m.set(2, 1, 0.8);
  m.set(2, 2, 0.6);
  m.set(3, 1, 0.7);
  m.set(3, 2, 0.5);
  m.set(3, 3, 0.4);
  m.set_single(1, 0.9);
  m.set_single(2, 0.5);
  m.set_single(3, 0.7);
  CHECK(kaizen::forward_transfer(m) == doctest::Approx(-0.1).epsilon(1e-15));
}

TEST_CASE("forward transfer zero when diagonal equals single-task") {
  AccuracyMatrix m(3);
  for (int t = 1; t <= 3; ++t)
    for (int k = 1; k <= t; ++k) m.set(t, k, 0.1 * t + 0.05 * k);
  for (int k = 1; k <= 3; ++k) m.set_single(k, m.at(k, k));
  CHECK(kaizen::forward_transfer(m) == 0.0);
}

TEST_CASE("monotone columns never forget") {
  AccuracyMatrix m(3);
  m.set(1, 1, 0.2);
  m.set(2, 1, 0.3);
  m.set(2, 2, 0.4);
  m.set(3, 1, 0.3);
  m.set(3, 2, 0.5);
  m.set(3, 3, 0.1);
  CHECK(kaizen::forgetting(m) == 0.0);
}

TEST_CASE("metric oracle over random matrices") {
  const auto o = checks::metric_oracle(1000, 99);
  INFO(o.detail);
  CHECK(o.pass);
}

TEST_CASE("metrics are pure") {
  AccuracyMatrix m(3);
  kaizen::Rng rng(4);
  for (int t = 1; t <= 3; ++t)
    for (int k = 1; k <= t; ++k) m.set(t, k, rng.uniform());
  const auto a = kaizen::compute_metrics(m);
  const auto b = kaizen::compute_metrics(m);
  CHECK(kaizen::metrics_to_json(a) == kaizen::metrics_to_json(b));
}

TEST_CASE("rejections") {
  AccuracyMatrix partial(3);
  partial.set(1, 1, 0.5);
  CHECK_THROWS(kaizen::final_accuracy(partial));
  CHECK_THROWS(kaizen::continual_accuracy(partial));

  AccuracyMatrix one(1);
  one.set(1, 1, 0.5);
  CHECK_THROWS(kaizen::forgetting(one));
  CHECK(kaizen::final_accuracy(one) == 0.5);

  AccuracyMatrix two(2);
  two.set(1, 1, 0.5);
  two.set(2, 1, 0.5);
  two.set(2, 2, 0.5);
  CHECK_THROWS(kaizen::forward_transfer(two));  // no single-task values
  CHECK_THROWS(two.set(1, 2, 0.1));             // upper triangle
  CHECK_THROWS(two.set(2, 1, 1.5));             // out of range
}

TEST_CASE("report carries curves and optional fields") {
  AccuracyMatrix m(3);
  m.set(1, 1, 0.9);
  m.set(2, 1, 0.6);
  m.set(2, 2, 0.8);
  m.set(3, 1, 0.5);
  m.set(3, 2, 0.7);
  m.set(3, 3, 0.6);
  const auto r = kaizen::compute_metrics(m);
  CHECK(r.num_tasks == 3);
  CHECK(r.forgetting.has_value());
  CHECK_FALSE(r.forward_transfer.has_value());
  REQUIRE(r.per_task_curves.size() == 3);
  CHECK(r.per_task_curves.at(1).size() == 3);
  CHECK(r.per_task_curves.at(3).size() == 1);
  REQUIRE(r.average_seen.size() == 3);
  CHECK(r.average_seen[1] == doctest::Approx(0.7));

  const auto back = kaizen::metrics_from_json(kaizen::metrics_to_json(r));
  CHECK(back.final_accuracy == r.final_accuracy);
  CHECK(back.continual_accuracy == r.continual_accuracy);
  CHECK(back.forgetting == r.forgetting);
  CHECK(back.average_seen == r.average_seen);
}

TEST_CASE("CSV schema round trip") {
  AccuracyMatrix m(3);
  kaizen::Rng rng(12);
  for (int t = 1; t <= 3; ++t)
    for (int k = 1; k <= t; ++k) m.set(t, k, rng.uniform());
  for (int k = 1; k <= 3; ++k) m.set_single(k, rng.uniform());
  const std::string csv = m.to_csv();
  CHECK(csv.rfind("after_task,task_1,task_2,task_3\n", 0) == 0);
  CHECK(csv.find("\n1,") != std::string::npos);
  auto back = AccuracyMatrix::from_csv(csv);
  back.single_from_csv(m.single_to_csv());
  CHECK(back == m);
  CHECK(AccuracyMatrix::from_json(m.to_json()) == m);
}

TEST_CASE("CSV schema violations are itemised") {
  const std::string bad = "after_task,task_1,task_2\n1,0.5,0.2\n2,abc\n";
  try {
    (void)AccuracyMatrix::from_csv(bad);
    FAIL("expected DataError");
  } catch (const kaizen::DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 1") != std::string::npos);
    CHECK(msg.find("row 2") != std::string::npos);
  }
  CHECK_THROWS_AS(AccuracyMatrix::from_csv("task,foo\n"), kaizen::DataError);
}

TEST_CASE("precomputed values render verbatim") {
  const auto r = kaizen::metrics_from_json(R"({"FA": 0.409, "CA": 0.570, "F": 0.396})");
  std::vector<kaizen::TableRow> rows{{"MoCoV2+", "Kaizen", r.final_accuracy, r.continual_accuracy, r.forgetting, r.forward_transfer}};
  const std::string table = kaizen::render_metrics_table(rows);
  CHECK(table.find("0.409") != std::string::npos);
  CHECK(table.find("0.570") != std::string::npos);
  CHECK(table.find("0.396") != std::string::npos);
  CHECK(table.find(" -") != std::string::npos);  // FT absent
  CHECK_THROWS_AS(kaizen::metrics_from_json(R"({"CA": "x"})"), kaizen::DataError);
}

TEST_CASE("macro accuracy over hand-built confusion counts") {
  // class 0: 2/2 right, class 1: 1/2 right, class 2: 0/2 right
  const std::vector<int32_t> labels{0, 0, 1, 1, 2, 2};
  const std::vector<int32_t> preds{0, 0, 1, 0, 1, 0};
  const std::vector<int32_t> classes{0, 1, 2};
  CHECK(kaizen::macro_accuracy(preds, labels, classes) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(kaizen::macro_accuracy(labels, labels, classes) == 1.0);
}

}  // TEST_SUITE
