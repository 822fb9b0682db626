// SPDX-License-Identifier: Apache-2.0

#include "kaizen/model_zoo.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "kaizen/errors.hpp"

namespace kaizen {

FeatureExtractor::Output FeatureExtractor::forward(const Var& images, nn::NormMode mode) {
  Output out;
  out.features = backbone_.forward(images, mode);
  out.embedding = projector_.forward(out.features, mode);
  return out;
}

std::vector<nn::NamedParameter> FeatureExtractor::parameters(const std::string& prefix) const {
  auto params = backbone_.parameters(prefix + "backbone.");
  auto proj = projector_.parameters(prefix + "projector.");
  params.insert(params.end(), proj.begin(), proj.end());
  return params;
}

std::vector<nn::NamedBuffer> FeatureExtractor::buffers(const std::string& prefix) {
  auto bufs = backbone_.buffers(prefix + "backbone.");
  auto proj = projector_.buffers(prefix + "projector.");
  bufs.insert(bufs.end(), proj.begin(), proj.end());
  return bufs;
}

uint64_t FeatureExtractor::checksum() const {
  uint64_t h = 1469598103934665603ULL;
  for (const auto& p : parameters("")) h = kaizen::checksum(p.var.value(), h);
  return h;
}

ClassifierInput classifier_input_from_string(const std::string& name) {
  if (name == "current_view1") return ClassifierInput::kCurrentView1;
  if (name == "momentum_view2") return ClassifierInput::kMomentumView2;
  throw std::invalid_argument("unknown classifier_input '" + name + "' (expected current_view1 or momentum_view2)");
}

std::string to_string(ClassifierInput input) {
  return input == ClassifierInput::kCurrentView1 ? "current_view1" : "momentum_view2";
}

int64_t ModelState::feature_dim() const {
  const auto params = classifier.parameters();
  return params.front().var.shape()[1];
}

std::vector<nn::NamedParameter> ModelState::trainable_parameters(bool include_classifier) const {
  auto params = current.parameters("current.");
  for (auto& p : predictor_kd.parameters("predictor_kd.")) params.push_back(p);
  for (auto& p : predictor_ssl.parameters("predictor_ssl.")) params.push_back(p);
  if (include_classifier) {
    for (auto& p : classifier.parameters("classifier.")) params.push_back(p);
  }
  return params;
}

std::map<std::string, Tensor*> ModelState::named_state() {
  std::map<std::string, Tensor*> out;
  auto add_params = [&out](const std::vector<nn::NamedParameter>& params) {
    for (const auto& p : params) {
      Var v = p.var;
      out[p.name] = &v.mutable_value();
    }
  };
  auto add_buffers = [&out](const std::vector<nn::NamedBuffer>& bufs) {
    for (const auto& b : bufs) out["buffer:" + b.name] = b.tensor;
  };
  add_params(current.parameters("current."));
  add_buffers(current.buffers("current."));
  if (momentum) {
    add_params(momentum->parameters("momentum."));
    add_buffers(momentum->buffers("momentum."));
  }
  add_params(predictor_kd.parameters("predictor_kd."));
  add_buffers(predictor_kd.buffers("predictor_kd."));
  add_params(predictor_ssl.parameters("predictor_ssl."));
  add_buffers(predictor_ssl.buffers("predictor_ssl."));
  add_params(classifier.parameters("classifier."));
  add_buffers(classifier.buffers("classifier."));
  if (previous) {
    add_params(previous->parameters("previous."));
    add_buffers(previous->buffers("previous."));
  }
  if (previous_classifier) {
    add_params(previous_classifier->parameters("previous_classifier."));
    add_buffers(previous_classifier->buffers("previous_classifier."));
  }
  return out;
}

nn::Sequential build_backbone(const ArchitectureSpec& spec, Rng& rng, int64_t* feature_dim) {
  nn::Sequential net;
  if (spec.backbone == "resnet18" || spec.backbone == "resnet_mini") {
    const int64_t w = spec.base_width;
    if (w <= 0) throw std::invalid_argument("base_width must be positive");
    net.emplace<nn::Conv2d>(spec.input_channels, w, ops::Conv2dGeometry{3, spec.stem_stride, 1}, rng);
    net.emplace<nn::BatchNorm>(w);
    net.emplace<nn::ReLU>();
    const bool full = spec.backbone == "resnet18";
    const std::vector<int64_t> widths = full ? std::vector<int64_t>{w, 2 * w, 4 * w, 8 * w}
                                             : std::vector<int64_t>{w, 2 * w, 4 * w};
    const int64_t blocks = full ? 2 : 1;
    int64_t in = w;
    for (size_t s = 0; s < widths.size(); ++s) {
      for (int64_t b = 0; b < blocks; ++b) {
        const int64_t stride = (s > 0 && b == 0) ? 2 : 1;
        net.emplace<nn::BasicBlock>(in, widths[s], stride, rng);
        in = widths[s];
      }
    }
    net.emplace<nn::GlobalAvgPool>();
    *feature_dim = in;
  } else if (spec.backbone == "mlp") {
    if (spec.mlp_hidden.empty()) throw std::invalid_argument("mlp backbone needs at least one hidden layer");
    net.emplace<nn::Flatten>();
    int64_t in = spec.input_channels * spec.image_size * spec.image_size;
    for (int64_t h : spec.mlp_hidden) {
      net.emplace<nn::Linear>(in, h, rng);
      net.emplace<nn::BatchNorm>(h);
      net.emplace<nn::ReLU>();
      in = h;
    }
    *feature_dim = in;
  } else {
    throw std::invalid_argument("unknown backbone '" + spec.backbone + "' (expected resnet18, resnet_mini or mlp)");
  }
  return net;
}

nn::Sequential build_classifier(int64_t in_dim, int64_t hidden, int64_t outputs, Rng& rng) {
  nn::Sequential g;
  g.emplace<nn::Linear>(in_dim, hidden, rng);
  g.emplace<nn::ReLU>();
  g.emplace<nn::Linear>(hidden, outputs, rng);
  return g;
}

void freeze(nn::Sequential& net) {
  for (auto& p : net.parameters()) {
    p.var.node()->requires_grad = false;
    p.var.zero_grad();
  }
}

void freeze(FeatureExtractor& extractor) {
  freeze(extractor.backbone());
  freeze(extractor.projector());
}

ModelState init_model(const ArchitectureSpec& spec, ssl::SSLKind kind, uint64_t seed) {
  if (spec.num_outputs < 1 || spec.classifier_hidden < 1 || spec.projector_dim < 1 || spec.projector_hidden < 1 ||
      spec.predictor_hidden < 1) {
    throw std::invalid_argument("architecture sizes must be positive");
  }
  Rng rng(derive_seed(seed, 0x10de1));
  ModelState state;
  state.spec = spec;
  state.ssl_kind = kind;
  int64_t feature_dim = 0;
  nn::Sequential backbone = build_backbone(spec, rng, &feature_dim);
  nn::Sequential projector = ssl::make_projector(kind, feature_dim, spec.projector_hidden, spec.projector_dim, rng);
  state.current = FeatureExtractor(std::move(backbone), std::move(projector));
  state.predictor_kd = ssl::make_predictor(spec.projector_dim, spec.predictor_hidden, rng);
  state.predictor_ssl = ssl::make_predictor(spec.projector_dim, spec.predictor_hidden, rng);
  state.classifier = build_classifier(feature_dim, spec.classifier_hidden, spec.num_outputs, rng);
  if (ssl::uses_momentum_encoder(kind)) {
    state.momentum = state.current;  // deep copy via Sequential's copy constructor
    freeze(*state.momentum);
  }
  return state;
}

void ema_update(ModelState& state, double momentum) {
  if (!state.momentum) throw std::logic_error("ema_update: no momentum extractor for " + ssl::to_string(state.ssl_kind));
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw std::invalid_argument("ema_update: momentum must lie in [0, 1]");
  const auto target = state.momentum->parameters("");
  const auto online = state.current.parameters("");
  for (size_t i = 0; i < target.size(); ++i) {
    Var t = target[i].var;
    Tensor& tv = t.mutable_value();
    const Tensor& ov = online[i].var.value();
    for (int64_t k = 0; k < tv.numel(); ++k) tv[k] = momentum * tv[k] + (1.0 - momentum) * ov[k];
  }
  auto tb = state.momentum->buffers("");
  auto ob = state.current.buffers("");
  for (size_t i = 0; i < tb.size(); ++i) {
    for (int64_t k = 0; k < tb[i].tensor->numel(); ++k) {
      (*tb[i].tensor)[k] = momentum * (*tb[i].tensor)[k] + (1.0 - momentum) * (*ob[i].tensor)[k];
    }
  }
}

void snapshot_previous(ModelState& state) {
  state.previous = state.current;
  freeze(*state.previous);
  state.previous_classifier = state.classifier;
  freeze(*state.previous_classifier);
  state.previous_classes = state.seen_classes;
  ++state.task_index;
}

ForwardPaths forward_paths(ModelState& state, const Tensor& view1, const Tensor& view2, ClassifierInput classifier_input,
                           bool need_previous) {
  if (!view1.same_shape(view2)) {
    throw std::invalid_argument("forward_paths: view shapes differ " + shape_string(view1.shape()) + " vs " +
                                shape_string(view2.shape()));
  }
  if (state.task_index > 1 && !state.has_previous()) {
    throw std::logic_error("forward_paths: task " + std::to_string(state.task_index) + " has no previous snapshot");
  }
  ForwardPaths out;
  const Var x1 = Var::constant(view1);
  const Var x2 = Var::constant(view2);

  auto online = state.current.forward(x1, nn::NormMode::kTrain);
  out.features_online = online.features;
  out.z_online = online.embedding;

  if (state.momentum) {
    auto target = state.momentum->forward(x2, nn::NormMode::kTrainFrozen);
    out.z_target = target.embedding.detach();
    out.features_target = target.features.detach();
  } else {
    auto target = state.current.forward(x2, nn::NormMode::kTrain);
    out.z_target = target.embedding;
    out.features_target = target.features;
  }

  out.p_kd = state.predictor_kd.forward(out.z_online, nn::NormMode::kTrain);
  out.p_ssl = state.predictor_ssl.forward(out.z_online, nn::NormMode::kTrain);

  const Var classifier_in = classifier_input == ClassifierInput::kCurrentView1 ? out.features_online.detach()
                                                                               : out.features_target.detach();
  out.c_current = state.classifier.forward(classifier_in, nn::NormMode::kTrain);

  if (need_previous && state.has_previous()) {
    // Batch statistics like the online path, running stats left untouched.
    auto prev = state.previous->forward(x1, nn::NormMode::kTrainFrozen);
    out.z_previous = prev.embedding.detach();
    out.c_previous = state.previous_classifier->forward(prev.features.detach(), nn::NormMode::kTrainFrozen).detach();
  }
  return out;
}

Tensor extract_features(FeatureExtractor& extractor, const Tensor& images) {
  return extractor.backbone().forward(Var::constant(images), nn::NormMode::kEval).value();
}

Tensor predict_logits(ModelState& state, const Tensor& images) {
  const Var features = Var::constant(extract_features(state.current, images));
  return state.classifier.forward(features, nn::NormMode::kEval).value();
}

namespace {

constexpr char kMagic[8] = {'K', 'Z', 'C', 'K', 'P', 'T', '0', '1'};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, ModelState& state, const std::string& metadata_json) {
  nlohmann::json header;
  header["task_index"] = state.task_index;
  header["ssl_kind"] = ssl::to_string(state.ssl_kind);
  header["has_momentum"] = state.momentum.has_value();
  header["has_previous"] = state.has_previous();
  header["seen_classes"] = state.seen_classes;
  header["previous_classes"] = state.previous_classes;
  try {
    header["metadata"] = nlohmann::json::parse(metadata_json);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("checkpoint metadata is not JSON: ") + e.what());
  }
  nlohmann::json entries = nlohmann::json::array();
  const auto named = state.named_state();
  int64_t offset = 0;
  for (const auto& [name, tensor] : named) {
    entries.push_back({{"name", name}, {"shape", tensor->shape()}, {"offset", offset}});
    offset += tensor->numel();
  }
  header["tensors"] = entries;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, tensor] : named) {
    out.write(reinterpret_cast<const char*>(tensor->data()), static_cast<std::streamsize>(tensor->numel() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

std::string load_checkpoint(const std::filesystem::path& path, ModelState& state) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw DataError("not a checkpoint file: " + path.string());
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated checkpoint header in " + path.string());
  const auto header = nlohmann::json::parse(text);
  if (header.at("ssl_kind").get<std::string>() != ssl::to_string(state.ssl_kind)) {
    throw DataError("checkpoint SSL kind " + header.at("ssl_kind").get<std::string>() + " does not match model");
  }
  if (header.at("has_previous").get<bool>() && !state.has_previous()) {
    state.previous = state.current;
    freeze(*state.previous);
    state.previous_classifier = state.classifier;
    freeze(*state.previous_classifier);
  } else if (!header.at("has_previous").get<bool>()) {
    state.previous.reset();
    state.previous_classifier.reset();
  }
  state.task_index = header.at("task_index").get<int64_t>();
  state.seen_classes = header.value("seen_classes", std::vector<int32_t>{});
  state.previous_classes = header.value("previous_classes", std::vector<int32_t>{});
  auto named = state.named_state();
  const auto& entries = header.at("tensors");
  if (entries.size() != named.size()) {
    throw DataError("checkpoint holds " + std::to_string(entries.size()) + " tensors, model expects " +
                    std::to_string(named.size()));
  }
  for (const auto& e : entries) {
    const auto name = e.at("name").get<std::string>();
    auto it = named.find(name);
    if (it == named.end()) throw DataError("checkpoint tensor '" + name + "' not present in model");
    const auto shape = e.at("shape").get<Shape>();
    if (shape != it->second->shape()) throw DataError("checkpoint tensor '" + name + "' has shape " + shape_string(shape));
    in.read(reinterpret_cast<char*>(it->second->data()), static_cast<std::streamsize>(it->second->numel() * sizeof(double)));
    if (!in) throw DataError("truncated checkpoint data in " + path.string());
  }
  return header.at("metadata").dump();
}

}  // namespace kaizen
