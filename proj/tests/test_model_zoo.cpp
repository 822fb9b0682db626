// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "checks.hpp"
#include "kaizen/errors.hpp"
#include "kaizen/model_zoo.hpp"
#include "kaizen/ops.hpp"

namespace ssl = kaizen::ssl;
using testing_support::TempDir;

namespace {

kaizen::ArchitectureSpec tiny_arch() { return testing_support::make_tiny().arch; }

kaizen::Tensor random_images(kaizen::Rng& rng, int64_t n, int64_t size = 8) {
  kaizen::Tensor t({n, 3, size, size});
  for (double& v : t.values()) v = rng.normal();
  return t;
}

void fill_all(const std::vector<kaizen::nn::NamedParameter>& params, double value) {
  for (const auto& p : params) {
    kaizen::Var v = p.var;
    v.mutable_value().fill(value);
  }
}

}  // namespace

TEST_SUITE("model_zoo") {

TEST_CASE("init: momentum copy for BYOL, absent for SimCLR, deterministic") {
  const auto arch = tiny_arch();
  auto byol = kaizen::init_model(arch, ssl::SSLKind::kBYOL, 1);
  REQUIRE(byol.momentum.has_value());
  CHECK(byol.momentum->checksum() == byol.current.checksum());
  CHECK(byol.task_index == 1);
  CHECK_FALSE(byol.has_previous());
  auto simclr = kaizen::init_model(arch, ssl::SSLKind::kSimCLR, 1);
  CHECK_FALSE(simclr.momentum.has_value());
  auto again = kaizen::init_model(arch, ssl::SSLKind::kSimCLR, 1);
  CHECK(again.current.checksum() == simclr.current.checksum());
  CHECK(kaizen::nn::parameter_checksum(again.classifier) == kaizen::nn::parameter_checksum(simclr.classifier));
  auto other = kaizen::init_model(arch, ssl::SSLKind::kSimCLR, 2);
  CHECK(other.current.checksum() != simclr.current.checksum());
}

TEST_CASE("init rejects unknown backbones") {
  auto arch = tiny_arch();
  arch.backbone = "vgg";
  CHECK_THROWS(kaizen::init_model(arch, ssl::SSLKind::kBYOL, 0));
}

TEST_CASE("ema: fixed point, full copy and the scalar example") {
  const auto arch = tiny_arch();
  auto s = kaizen::init_model(arch, ssl::SSLKind::kBYOL, 3);
  fill_all(s.momentum->parameters("m"), 2.0);
  fill_all(s.current.parameters("f"), 4.0);
  const uint64_t before = s.momentum->checksum();
  kaizen::ema_update(s, 1.0);
  CHECK(s.momentum->checksum() == before);
  kaizen::ema_update(s, 0.99);
  for (const auto& p : s.momentum->parameters("m")) {
    for (double v : p.var.value().values()) REQUIRE(v == doctest::Approx(2.02).epsilon(1e-14));
  }
  kaizen::ema_update(s, 0.0);
  const auto m = s.momentum->parameters("m");
  const auto c = s.current.parameters("f");
  for (size_t i = 0; i < m.size(); ++i) CHECK(m[i].var.value().storage() == c[i].var.value().storage());
  CHECK_THROWS(kaizen::ema_update(s, 1.5));
  auto simclr = kaizen::init_model(arch, ssl::SSLKind::kSimCLR, 3);
  CHECK_THROWS(kaizen::ema_update(simclr, 0.5));
}

TEST_CASE("ema closed form over k steps") {
  const auto o = checks::ema_closed_form();
  INFO(o.detail);
  CHECK(o.pass);
}

TEST_CASE("snapshot: bitwise copy, frozen, independent, task index advances") {
  auto s = kaizen::init_model(tiny_arch(), ssl::SSLKind::kSimCLR, 4);
  s.seen_classes = {0, 2};
  const uint64_t f = s.current.checksum();
  const uint64_t g = kaizen::nn::parameter_checksum(s.classifier);
  kaizen::snapshot_previous(s);
  CHECK(s.task_index == 2);
  REQUIRE(s.has_previous());
  CHECK(s.previous->checksum() == f);
  CHECK(kaizen::nn::parameter_checksum(*s.previous_classifier) == g);
  CHECK(s.previous_classes == std::vector<int32_t>{0, 2});
  for (const auto& p : s.previous->parameters("p")) CHECK_FALSE(p.var.requires_grad());
  for (const auto& p : s.previous_classifier->parameters()) CHECK_FALSE(p.var.requires_grad());
  // Perturbing the live networks leaves the snapshot alone.
  fill_all(s.current.parameters("f"), 0.5);
  fill_all(s.classifier.parameters(), 0.5);
  CHECK(s.previous->checksum() == f);
  CHECK(kaizen::nn::parameter_checksum(*s.previous_classifier) == g);
  // Classifier and predictors carry on rather than being re-initialised.
  CHECK(kaizen::nn::parameter_checksum(s.classifier) != g);
}

TEST_CASE("frozen snapshot survives a full task of training") {
  const auto o = checks::frozen_snapshot();
  INFO(o.detail);
  CHECK(o.pass);
}

TEST_CASE("forward_paths on task 1 has no previous outputs") {
  auto s = kaizen::init_model(tiny_arch(), ssl::SSLKind::kBYOL, 5);
  kaizen::Rng rng(1);
  const auto x1 = random_images(rng, 4);
  const auto x2 = random_images(rng, 4);
  const auto p = kaizen::forward_paths(s, x1, x2);
  CHECK_FALSE(p.z_previous.defined());
  CHECK_FALSE(p.c_previous.defined());
  CHECK(p.z_online.shape() == kaizen::Shape{4, 8});
  CHECK(p.z_target.shape() == kaizen::Shape{4, 8});
  CHECK(p.p_kd.shape() == kaizen::Shape{4, 8});
  CHECK(p.p_ssl.shape() == kaizen::Shape{4, 8});
  CHECK(p.c_current.shape() == kaizen::Shape{4, 4});
  CHECK_FALSE(p.z_target.requires_grad());  // momentum path carries no gradient
}

TEST_CASE("forward_paths with prev = current gives z_p = z_o") {
  auto s = kaizen::init_model(tiny_arch(), ssl::SSLKind::kSimCLR, 6);
  kaizen::snapshot_previous(s);
  kaizen::Rng rng(2);
  const auto x1 = random_images(rng, 5);
  const auto x2 = random_images(rng, 5);
  const auto p = kaizen::forward_paths(s, x1, x2);
  REQUIRE(p.z_previous.defined());
  CHECK(p.z_previous.value().storage() == p.z_online.value().storage());
  CHECK_FALSE(p.z_previous.requires_grad());
  CHECK_FALSE(p.c_previous.requires_grad());
}

TEST_CASE("forward_paths rejects task 2 without a snapshot and mismatched views") {
  auto s = kaizen::init_model(tiny_arch(), ssl::SSLKind::kSimCLR, 6);
  kaizen::Rng rng(3);
  CHECK_THROWS(kaizen::forward_paths(s, random_images(rng, 3), random_images(rng, 4)));
  s.task_index = 2;
  CHECK_THROWS(kaizen::forward_paths(s, random_images(rng, 3), random_images(rng, 3)));
}

TEST_CASE("CE on the classifier output leaves extractor gradients at zero") {
  auto s = kaizen::init_model(tiny_arch(), ssl::SSLKind::kVICReg, 7);
  kaizen::Rng rng(4);
  const auto p = kaizen::forward_paths(s, random_images(rng, 6), random_images(rng, 6));
  const std::vector<int32_t> labels{0, 1, 2, 3, 0, 1};
  const std::vector<uint8_t> mask(6, 1);
  kaizen::backward(kaizen::cross_entropy_hard(p.c_current, labels, mask));
  for (const auto& prm : s.current.parameters("f")) {
    if (!prm.var.has_grad()) continue;
    for (double g : prm.var.grad().values()) REQUIRE(g == 0.0);
  }
  bool classifier_grad = false;
  for (const auto& prm : s.classifier.parameters()) classifier_grad = classifier_grad || prm.var.has_grad();
  CHECK(classifier_grad);
}

TEST_CASE("resnet backbones produce the expected feature widths") {
  kaizen::Rng rng(5);
  for (const char* name : {"resnet_mini", "resnet18"}) {
    kaizen::ArchitectureSpec spec;
    spec.backbone = name;
    spec.base_width = 4;
    spec.image_size = 8;
    int64_t dim = 0;
    auto net = kaizen::build_backbone(spec, rng, &dim);
    const auto out = net.forward(kaizen::Var::constant(random_images(rng, 2)), kaizen::nn::NormMode::kTrain);
    CHECK(out.shape() == kaizen::Shape{2, dim});
  }
}

TEST_CASE("checkpoint round trip") {
  TempDir tmp("ckpt");
  auto s = kaizen::init_model(tiny_arch(), ssl::SSLKind::kMoCoV2Plus, 8);
  s.seen_classes = {1, 3};
  kaizen::snapshot_previous(s);
  fill_all(s.current.parameters("f"), 0.25);
  const auto path = tmp.path / "a.ckpt";
  kaizen::save_checkpoint(path, s, R"({"note": "x"})");

  auto r = kaizen::init_model(tiny_arch(), ssl::SSLKind::kMoCoV2Plus, 99);
  kaizen::snapshot_previous(r);
  const std::string meta = kaizen::load_checkpoint(path, r);
  CHECK(meta.find("note") != std::string::npos);
  CHECK(r.current.checksum() == s.current.checksum());
  CHECK(r.momentum->checksum() == s.momentum->checksum());
  CHECK(r.previous->checksum() == s.previous->checksum());
  CHECK(r.task_index == s.task_index);
  CHECK(r.previous_classes == s.previous_classes);

  auto wrong = kaizen::init_model(tiny_arch(), ssl::SSLKind::kBYOL, 1);
  CHECK_THROWS_AS(kaizen::load_checkpoint(path, wrong), kaizen::DataError);
  CHECK_THROWS_AS(kaizen::load_checkpoint(tmp.path / "missing.ckpt", r), kaizen::DataError);
}

}  // TEST_SUITE
