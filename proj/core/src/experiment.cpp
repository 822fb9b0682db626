// SPDX-License-Identifier: Apache-2.0

#include "kaizen/experiment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <Eigen/Core>
#include <json.hpp>

#include "kaizen/errors.hpp"
#include "kaizen/task_stream.hpp"

namespace kaizen {

using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Strict JSON reading: every key is consumed exactly once; leftovers and type
// mismatches are collected with their JSON path.

class Reader {
 public:
  Reader(const json& node, std::string path, std::vector<std::string>& problems)
      : node_(node), path_(std::move(path)), problems_(problems) {
    if (!node_.is_object()) problems_.push_back(path_ + ": expected an object");
  }
  ~Reader() {
    if (!node_.is_object()) return;
    for (const auto& [key, value] : node_.items()) {
      if (!used_.count(key)) problems_.push_back(path_ + "." + key + ": unknown key");
    }
  }
  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  bool has(const std::string& key) const { return node_.is_object() && node_.contains(key); }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    used_.insert(key);
    const json& v = node_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned() && v.get<int64_t>() < 0) {
            throw std::invalid_argument("expected a non-negative integer");
          }
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw std::invalid_argument("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("expected a string");
      }
      out = v.get<T>();
    } catch (const std::exception& e) {
      problems_.push_back(path_ + "." + key + ": " + e.what());
    }
  }

  // Returns nullptr when absent.
  const json* child(const std::string& key) {
    if (!has(key)) return nullptr;
    used_.insert(key);
    return &node_.at(key);
  }

  const std::string& path() const { return path_; }
  std::vector<std::string>& problems() { return problems_; }

 private:
  const json& node_;
  std::string path_;
  std::vector<std::string>& problems_;
  std::set<std::string> used_;
};

template <typename Enum, typename Parse>
void get_enum(Reader& r, const std::string& key, Enum& out, Parse parse) {
  std::string name;
  if (!r.has(key)) return;
  r.get(key, name);
  try {
    out = parse(name);
  } catch (const std::exception& e) {
    r.problems().push_back(r.path() + "." + key + ": " + e.what());
  }
}

json optimizer_json(const optim::OptimizerSettings& o) {
  return {{"kind", optim::to_string(o.kind)},   {"learning_rate", o.learning_rate}, {"momentum", o.momentum},
          {"weight_decay", o.weight_decay},     {"lars_eta", o.lars_eta},           {"warmup_steps", o.warmup_steps},
          {"min_lr_ratio", o.min_lr_ratio}};
}

void read_optimizer(const json& node, const std::string& path, optim::OptimizerSettings& o,
                    std::vector<std::string>& problems) {
  Reader r(node, path, problems);
  get_enum(r, "kind", o.kind, optim::optimizer_kind_from_string);
  r.get("learning_rate", o.learning_rate);
  r.get("momentum", o.momentum);
  r.get("weight_decay", o.weight_decay);
  r.get("lars_eta", o.lars_eta);
  r.get("warmup_steps", o.warmup_steps);
  r.get("min_lr_ratio", o.min_lr_ratio);
}

json augmentation_json(const ssl::AugmentationPolicy& p) {
  return {{"output_size", p.output_size},
          {"crop_probability", p.crop_probability},
          {"crop_scale_min", p.crop_scale_min},
          {"crop_scale_max", p.crop_scale_max},
          {"crop_ratio_min", p.crop_ratio_min},
          {"crop_ratio_max", p.crop_ratio_max},
          {"flip_probability", p.flip_probability},
          {"jitter_probability", p.jitter_probability},
          {"brightness", p.brightness},
          {"contrast", p.contrast},
          {"saturation", p.saturation},
          {"hue", p.hue},
          {"grayscale_probability", p.grayscale_probability},
          {"blur_probability", p.blur_probability},
          {"blur_sigma_min", p.blur_sigma_min},
          {"blur_sigma_max", p.blur_sigma_max},
          {"mean", p.mean},
          {"stddev", p.stddev}};
}

void read_augmentation(const json& node, const std::string& path, ssl::AugmentationPolicy& p,
                       std::vector<std::string>& problems) {
  Reader r(node, path, problems);
  r.get("output_size", p.output_size);
  r.get("crop_probability", p.crop_probability);
  r.get("crop_scale_min", p.crop_scale_min);
  r.get("crop_scale_max", p.crop_scale_max);
  r.get("crop_ratio_min", p.crop_ratio_min);
  r.get("crop_ratio_max", p.crop_ratio_max);
  r.get("flip_probability", p.flip_probability);
  r.get("jitter_probability", p.jitter_probability);
  r.get("brightness", p.brightness);
  r.get("contrast", p.contrast);
  r.get("saturation", p.saturation);
  r.get("hue", p.hue);
  r.get("grayscale_probability", p.grayscale_probability);
  r.get("blur_probability", p.blur_probability);
  r.get("blur_sigma_min", p.blur_sigma_min);
  r.get("blur_sigma_max", p.blur_sigma_max);
  for (const char* key : {"mean", "stddev"}) {
    if (const json* v = r.child(key)) {
      if (!v->is_array() || v->size() != 3 || !(*v)[0].is_number() || !(*v)[1].is_number() || !(*v)[2].is_number()) {
        problems.push_back(path + "." + key + ": expected three numbers");
        continue;
      }
      (std::string(key) == "mean" ? p.mean : p.stddev) = v->get<std::array<double, 3>>();
    }
  }
}

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

std::string now_iso8601() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Presets

ExperimentConfig full_config() {
  ExperimentConfig c;
  c.name = "cifar100-5task";
  c.dataset.id = "cifar100";
  c.dataset.path = "cifar-100-binary";
  c.dataset.image_size = 32;
  c.num_tasks = 5;
  c.partition_seed = 0;
  c.label_fraction = 1.0;
  c.replay_fraction = 0.01;
  c.min_per_batch = 32;
  c.ssl_kind = ssl::SSLKind::kMoCoV2Plus;
  c.ssl = ssl::SSLHyperparameters::defaults(c.ssl_kind);
  c.architecture = ArchitectureSpec{};
  c.architecture.num_outputs = 100;
  c.training.strategy = Strategy::kKaizen;
  c.training.epochs_per_task = 500;
  c.training.batch_size = 256;
  c.training.augmentation = ssl::AugmentationPolicy::defaults(32);
  c.seeds = {0, 1, 2};
  return c;
}

std::vector<std::string> preset_names() { return {"full", "desk2", "desk5"}; }

ExperimentConfig preset(const std::string& name) {
  if (name == "full") return full_config();
  if (name != "desk2" && name != "desk5") {
    throw ConfigError("unknown preset '" + name + "' (expected full, desk2 or desk5)");
  }
  ExperimentConfig c = full_config();
  c.name = name == "desk2" ? "synthetic10-2task" : "synthetic10-5task";
  c.dataset.id = "synthetic";
  c.dataset.path.clear();
  c.dataset.synthetic = SyntheticSpec{};
  c.num_tasks = name == "desk2" ? 2 : 5;
  c.replay_fraction = 0.10;
  c.min_per_batch = 16;
  c.ssl.queue_size = 4096;
  c.architecture.backbone = "mlp";
  c.architecture.mlp_hidden = {256, 128};
  c.architecture.base_width = 8;
  c.architecture.projector_hidden = 128;
  c.architecture.projector_dim = 64;
  c.architecture.predictor_hidden = 128;
  c.architecture.classifier_hidden = 64;
  c.architecture.num_outputs = 10;
  c.training.epochs_per_task = 500;
  c.training.epoch_scale = name == "desk2" ? 0.06 : 0.04;
  c.training.batch_size = 64;
  c.training.posthoc_epochs = 20;
  return c;
}

// ---------------------------------------------------------------------------
// Serialisation

std::string config_to_json(const ExperimentConfig& c) {
  const auto& s = c.dataset.synthetic;
  const auto& a = c.architecture;
  const auto& t = c.training;
  json j;
  j["name"] = c.name;
  j["dataset"] = {{"id", c.dataset.id},
                  {"path", c.dataset.path},
                  {"image_size", c.dataset.image_size},
                  {"synthetic",
                   {{"num_classes", s.num_classes},
                    {"train_per_class", s.train_per_class},
                    {"test_per_class", s.test_per_class},
                    {"noise", s.noise},
                    {"seed", s.seed},
                    {"shared_attributes", s.shared_attributes}}}};
  j["num_tasks"] = c.num_tasks;
  j["partition_seed"] = c.partition_seed;
  j["label_fraction"] = c.label_fraction;
  j["replay_fraction"] = c.replay_fraction;
  j["min_per_batch"] = c.min_per_batch;
  j["ssl"] = {{"kind", ssl::to_string(c.ssl_kind)},
              {"temperature", c.ssl.temperature},
              {"queue_size", c.ssl.queue_size},
              {"ema_momentum", c.ssl.ema_momentum},
              {"vicreg",
               {{"invariance", c.ssl.vicreg.invariance},
                {"variance", c.ssl.vicreg.variance},
                {"covariance", c.ssl.vicreg.covariance}}},
              {"symmetrize", c.ssl.symmetrize}};
  j["architecture"] = {{"backbone", a.backbone},
                       {"base_width", a.base_width},
                       {"stem_stride", a.stem_stride},
                       {"mlp_hidden", a.mlp_hidden},
                       {"input_channels", a.input_channels},
                       {"image_size", a.image_size},
                       {"projector_hidden", a.projector_hidden},
                       {"projector_dim", a.projector_dim},
                       {"predictor_hidden", a.predictor_hidden},
                       {"classifier_hidden", a.classifier_hidden},
                       {"num_outputs", a.num_outputs}};
  j["training"] = {{"strategy", to_string(t.strategy)},
                   {"weights",
                    {{"kd_fe", t.weights.kd_fe}, {"kd_c", t.weights.kd_c}, {"ct_c", t.weights.ct_c}, {"ct_fe", t.weights.ct_fe}}},
                   {"epochs_per_task", t.epochs_per_task},
                   {"epoch_scale", t.epoch_scale},
                   {"batch_size", t.batch_size},
                   {"optimizer", optimizer_json(t.optimizer)},
                   {"classifier_input", to_string(t.classifier_input)},
                   {"distill_targets", to_string(t.distill_targets)},
                   {"posthoc",
                    {{"epochs", t.posthoc_epochs}, {"augment", t.posthoc_augment}, {"optimizer", optimizer_json(t.posthoc_optimizer)}}},
                   {"augmentation", augmentation_json(t.augmentation)}};
  j["single_task_baselines"] = c.single_task_baselines;
  j["save_checkpoints"] = c.save_checkpoints;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  std::vector<std::string> problems;
  ExperimentConfig c = full_config();
  {
    Reader r(root, "config", problems);
    r.get("name", c.name);
    if (const json* d = r.child("dataset")) {
      Reader rd(*d, "config.dataset", problems);
      rd.get("id", c.dataset.id);
      rd.get("path", c.dataset.path);
      rd.get("image_size", c.dataset.image_size);
      if (const json* s = rd.child("synthetic")) {
        Reader rs(*s, "config.dataset.synthetic", problems);
        rs.get("num_classes", c.dataset.synthetic.num_classes);
        rs.get("train_per_class", c.dataset.synthetic.train_per_class);
        rs.get("test_per_class", c.dataset.synthetic.test_per_class);
        rs.get("noise", c.dataset.synthetic.noise);
        rs.get("seed", c.dataset.synthetic.seed);
        rs.get("shared_attributes", c.dataset.synthetic.shared_attributes);
      }
    }
    r.get("num_tasks", c.num_tasks);
    r.get("partition_seed", c.partition_seed);
    r.get("label_fraction", c.label_fraction);
    r.get("replay_fraction", c.replay_fraction);
    r.get("min_per_batch", c.min_per_batch);
    if (const json* s = r.child("ssl")) {
      Reader rs(*s, "config.ssl", problems);
      get_enum(rs, "kind", c.ssl_kind, ssl::kind_from_string);
      c.ssl = ssl::SSLHyperparameters::defaults(c.ssl_kind);
      rs.get("temperature", c.ssl.temperature);
      rs.get("queue_size", c.ssl.queue_size);
      rs.get("ema_momentum", c.ssl.ema_momentum);
      rs.get("symmetrize", c.ssl.symmetrize);
      if (const json* v = rs.child("vicreg")) {
        Reader rv(*v, "config.ssl.vicreg", problems);
        rv.get("invariance", c.ssl.vicreg.invariance);
        rv.get("variance", c.ssl.vicreg.variance);
        rv.get("covariance", c.ssl.vicreg.covariance);
      }
    }
    if (const json* a = r.child("architecture")) {
      Reader ra(*a, "config.architecture", problems);
      auto& s = c.architecture;
      ra.get("backbone", s.backbone);
      ra.get("base_width", s.base_width);
      ra.get("stem_stride", s.stem_stride);
      if (const json* h = ra.child("mlp_hidden")) {
        if (!h->is_array() || !std::all_of(h->begin(), h->end(), [](const json& x) { return x.is_number_integer(); })) {
          problems.push_back("config.architecture.mlp_hidden: expected an array of integers");
        } else {
          s.mlp_hidden = h->get<std::vector<int64_t>>();
        }
      }
      ra.get("input_channels", s.input_channels);
      ra.get("image_size", s.image_size);
      ra.get("projector_hidden", s.projector_hidden);
      ra.get("projector_dim", s.projector_dim);
      ra.get("predictor_hidden", s.predictor_hidden);
      ra.get("classifier_hidden", s.classifier_hidden);
      ra.get("num_outputs", s.num_outputs);
    }
    if (const json* t = r.child("training")) {
      Reader rt(*t, "config.training", problems);
      auto& s = c.training;
      get_enum(rt, "strategy", s.strategy, strategy_from_string);
      if (const json* w = rt.child("weights")) {
        Reader rw(*w, "config.training.weights", problems);
        rw.get("kd_fe", s.weights.kd_fe);
        rw.get("kd_c", s.weights.kd_c);
        rw.get("ct_c", s.weights.ct_c);
        rw.get("ct_fe", s.weights.ct_fe);
      }
      rt.get("epochs_per_task", s.epochs_per_task);
      rt.get("epoch_scale", s.epoch_scale);
      rt.get("batch_size", s.batch_size);
      if (const json* o = rt.child("optimizer")) read_optimizer(*o, "config.training.optimizer", s.optimizer, problems);
      get_enum(rt, "classifier_input", s.classifier_input, classifier_input_from_string);
      get_enum(rt, "distill_targets", s.distill_targets, distill_targets_from_string);
      if (const json* p = rt.child("posthoc")) {
        Reader rp(*p, "config.training.posthoc", problems);
        rp.get("epochs", s.posthoc_epochs);
        rp.get("augment", s.posthoc_augment);
        if (const json* o = rp.child("optimizer")) {
          read_optimizer(*o, "config.training.posthoc.optimizer", s.posthoc_optimizer, problems);
        }
      }
      if (const json* a = rt.child("augmentation")) {
        read_augmentation(*a, "config.training.augmentation", s.augmentation, problems);
      }
    }
    r.get("single_task_baselines", c.single_task_baselines);
    r.get("save_checkpoints", c.save_checkpoints);
    if (const json* s = r.child("seeds")) {
      if (!s->is_array() || !std::all_of(s->begin(), s->end(), [](const json& x) { return x.is_number_unsigned(); })) {
        problems.push_back("config.seeds: expected an array of non-negative integers");
      } else {
        c.seeds = s->get<std::vector<uint64_t>>();
      }
    }
    r.get("output_dir", c.output_dir);
  }
  if (!problems.empty()) {
    std::string msg = "config has " + std::to_string(problems.size()) + " schema error(s):";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
  return c;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return config_from_json(os.str());
}

std::vector<std::string> validate_config(const ExperimentConfig& c) {
  std::vector<std::string> p;
  static const std::set<std::string> kDatasets{"synthetic", "cifar10", "cifar100", "image_folder", "indexed"};
  if (!kDatasets.count(c.dataset.id)) {
    p.push_back("dataset.id '" + c.dataset.id + "' must be one of synthetic, cifar10, cifar100, image_folder, indexed");
  }
  if (c.dataset.id != "synthetic" && c.dataset.path.empty()) p.push_back("dataset.path is required for " + c.dataset.id);
  if (c.dataset.image_size < 8) p.push_back("dataset.image_size must be >= 8");
  if ((c.dataset.id == "cifar10" || c.dataset.id == "cifar100") && c.dataset.image_size != 32) {
    p.push_back("CIFAR images are 32x32; dataset.image_size must be 32");
  }
  if (c.dataset.id == "synthetic") {
    const auto& s = c.dataset.synthetic;
    if (s.num_classes < 1 || s.train_per_class < 1 || s.test_per_class < 1) {
      p.push_back("dataset.synthetic counts must be positive");
    }
    if (!(s.noise >= 0.0)) p.push_back("dataset.synthetic.noise must be >= 0");
  }
  int64_t classes = -1;
  if (c.dataset.id == "synthetic") classes = c.dataset.synthetic.num_classes;
  if (c.dataset.id == "cifar10") classes = 10;
  if (c.dataset.id == "cifar100") classes = 100;
  if (c.num_tasks < 1) p.push_back("num_tasks must be >= 1");
  if (classes > 0 && c.num_tasks >= 1) {
    if (c.num_tasks > classes) {
      p.push_back("num_tasks " + std::to_string(c.num_tasks) + " exceeds the " + std::to_string(classes) + " classes");
    } else if (classes % c.num_tasks != 0) {
      p.push_back(std::to_string(classes) + " classes cannot be split evenly into " + std::to_string(c.num_tasks) + " tasks");
    }
    if (c.architecture.num_outputs < classes) {
      p.push_back("architecture.num_outputs " + std::to_string(c.architecture.num_outputs) + " is below the " +
                  std::to_string(classes) + " dataset classes");
    }
  }
  if (!(c.label_fraction > 0.0 && c.label_fraction <= 1.0)) p.push_back("label_fraction must lie in (0, 1]");
  if (!(c.replay_fraction >= 0.0 && c.replay_fraction <= 1.0)) p.push_back("replay_fraction must lie in [0, 1]");
  if (c.min_per_batch < 0) p.push_back("min_per_batch must be >= 0");
  if (c.replay_fraction > 0.0 && c.training.batch_size <= c.min_per_batch) {
    p.push_back("training.batch_size must exceed min_per_batch when replay is enabled");
  }
  if (!(c.ssl.temperature > 0.0)) p.push_back("ssl.temperature must be > 0");
  if (ssl::uses_queue(c.ssl_kind) && c.ssl.queue_size < 1) p.push_back("ssl.queue_size must be >= 1");
  if (!(c.ssl.ema_momentum >= 0.0 && c.ssl.ema_momentum <= 1.0)) p.push_back("ssl.ema_momentum must lie in [0, 1]");
  if (c.ssl.vicreg.invariance < 0.0 || c.ssl.vicreg.variance < 0.0 || c.ssl.vicreg.covariance < 0.0) {
    p.push_back("ssl.vicreg weights must be >= 0");
  }
  const auto& a = c.architecture;
  static const std::set<std::string> kBackbones{"resnet18", "resnet_mini", "mlp"};
  if (!kBackbones.count(a.backbone)) p.push_back("architecture.backbone must be resnet18, resnet_mini or mlp");
  if (a.image_size != c.dataset.image_size) p.push_back("architecture.image_size must equal dataset.image_size");
  if (a.input_channels != 3) p.push_back("architecture.input_channels must be 3 (RGB inputs)");
  if (a.base_width < 1 || a.projector_hidden < 1 || a.projector_dim < 1 || a.predictor_hidden < 1 ||
      a.classifier_hidden < 1 || a.num_outputs < 1) {
    p.push_back("architecture widths must be positive");
  }
  if (a.stem_stride < 1) p.push_back("architecture.stem_stride must be >= 1");
  if (a.backbone == "mlp" && (a.mlp_hidden.empty() || std::any_of(a.mlp_hidden.begin(), a.mlp_hidden.end(),
                                                                   [](int64_t h) { return h < 1; }))) {
    p.push_back("architecture.mlp_hidden must list positive widths");
  }
  if (c.training.augmentation.output_size != c.dataset.image_size) {
    p.push_back("training.augmentation.output_size must equal dataset.image_size");
  }
  try {
    c.training.validate();
  } catch (const ConfigError& e) {
    std::istringstream is(e.what());
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) p.push_back("training: " + line.substr(line.find("- ") + 2));
  }
  if (c.seeds.empty()) p.push_back("seeds must list at least one seed");
  if (std::set<uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size()) p.push_back("seeds must be distinct");
  if (c.output_dir.empty()) p.push_back("output_dir must not be empty");
  return p;
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string canonical = json::parse(config_to_json(config)).dump();
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::filesystem::path resolve_data_path(const ExperimentConfig& config) {
  std::filesystem::path p(config.dataset.path);
  const std::string root = env_or_empty("KAIZEN_DATA_ROOT");
  if (p.is_relative() && !root.empty()) p = std::filesystem::path(root) / p;
  return p;
}

std::filesystem::path resolve_output_root(const ExperimentConfig& config) {
  std::filesystem::path p(config.output_dir);
  const std::string root = env_or_empty("KAIZEN_OUTPUT_ROOT");
  if (p.is_relative() && !root.empty()) p = std::filesystem::path(root) / p;
  return p;
}

std::shared_ptr<const Dataset> load_dataset(const ExperimentConfig& config) {
  Dataset ds;
  const auto& id = config.dataset.id;
  if (id == "synthetic") {
    SyntheticSpec spec = config.dataset.synthetic;
    spec.image_size = config.dataset.image_size;
    ds = make_synthetic_dataset(spec);
  } else {
    const auto path = resolve_data_path(config);
    if (!std::filesystem::exists(path)) {
      throw DataError("dataset '" + id + "' not found at " + path.string() + " (set KAIZEN_DATA_ROOT or dataset.path)");
    }
    if (id == "cifar10") ds = load_cifar_binary(path, 10);
    else if (id == "cifar100") ds = load_cifar_binary(path, 100);
    else if (id == "image_folder") ds = load_image_folder(path, config.dataset.image_size);
    else if (id == "indexed") ds = load_indexed_directory(path, config.dataset.image_size);
    else throw ConfigError("unknown dataset id '" + id + "'");
  }
  validate_dataset(ds);
  return std::make_shared<const Dataset>(std::move(ds));
}

// ---------------------------------------------------------------------------
// Summaries

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  s.count = static_cast<int64_t>(values.size());
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  return s;
}

RunSummary summarize_run(std::string hash, ExperimentConfig config, std::vector<SeedResult> seeds) {
  RunSummary r;
  r.hash = std::move(hash);
  r.config = std::move(config);
  r.seeds = std::move(seeds);
  std::map<std::string, std::vector<double>> values;
  for (const auto& s : r.seeds) {
    values["FA"].push_back(s.metrics.final_accuracy);
    values["CA"].push_back(s.metrics.continual_accuracy);
    if (s.metrics.forgetting) values["F"].push_back(*s.metrics.forgetting);
    if (s.metrics.forward_transfer) values["FT"].push_back(*s.metrics.forward_transfer);
  }
  for (const auto& [k, v] : values) r.metrics[k] = summarize(v);
  return r;
}

std::string summary_to_json(const RunSummary& r) {
  json j;
  j["hash"] = r.hash;
  j["name"] = r.config.name;
  j["strategy"] = to_string(r.config.training.strategy);
  j["ssl_kind"] = ssl::to_string(r.config.ssl_kind);
  j["replay_fraction"] = r.config.replay_fraction;
  j["num_tasks"] = r.config.num_tasks;
  json per_seed = json::array();
  for (const auto& s : r.seeds) {
    json e = json::parse(metrics_to_json(s.metrics));
    e["seed"] = s.seed;
    per_seed.push_back(e);
  }
  j["per_seed"] = per_seed;
  json m = json::object();
  for (const auto& [k, v] : r.metrics) m[k] = {{"mean", v.mean}, {"std", v.stddev}, {"count", v.count}};
  j["metrics"] = m;
  return j.dump(2);
}

std::string summary_table(const std::vector<RunSummary>& runs) {
  auto cell = [](const RunSummary& r, const char* key) {
    auto it = r.metrics.find(key);
    if (it == r.metrics.end()) return std::string("-");
    char buf[48];
    if (it->second.count > 1) {
      std::snprintf(buf, sizeof(buf), "%.3f +/- %.3f", it->second.mean, it->second.stddev);
    } else {
      std::snprintf(buf, sizeof(buf), "%.3f", it->second.mean);
    }
    return std::string(buf);
  };
  std::vector<std::array<std::string, 6>> rows{{"SSL", "Method", "FA", "CA", "F", "FT"}};
  for (const auto& r : runs) {
    rows.push_back({ssl::to_string(r.config.ssl_kind), to_string(r.config.training.strategy), cell(r, "FA"),
                    cell(r, "CA"), cell(r, "F"), cell(r, "FT")});
  }
  std::array<size_t, 6> width{};
  for (const auto& row : rows)
    for (size_t i = 0; i < 6; ++i) width[i] = std::max(width[i], row[i].size());
  std::ostringstream os;
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t i = 0; i < 6; ++i) {
      if (i) os << "  ";
      if (i < 2) os << std::left; else os << std::right;
      os << std::setw(static_cast<int>(width[i])) << rows[r][i];
    }
    os << '\n';
    if (r == 0) {
      size_t total = 10;
      for (size_t w : width) total += w;
      os << std::string(total, '-') << '\n';
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Orchestration

namespace {

json build_manifest(const ExperimentConfig& config, const std::string& hash, const std::string& status) {
  json m;
  m["hash"] = hash;
  m["name"] = config.name;
  m["status"] = status;
  m["seeds"] = config.seeds;
  m["strategy"] = to_string(config.training.strategy);
  m["ssl_kind"] = ssl::to_string(config.ssl_kind);
  m["num_tasks"] = config.num_tasks;
  m["files"] = {"config.json", "partition.json", "manifest.json", "summary.json", "summary.txt"};
  m["seed_files"] = {"accuracy_matrix.csv", "accuracy_matrix.json", "metrics.json", "loss_log.jsonl",
                     "replay_buffer.json"};
  m["environment"] = {{"kaizen_version", kVersion},
                      {"compiler", std::string("gcc ") + __VERSION__},
                      {"cxx_standard", static_cast<int64_t>(__cplusplus)},
                      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                    std::to_string(EIGEN_MINOR_VERSION)}};
  m["updated"] = now_iso8601();
  return m;
}

std::filesystem::path seed_dir(const std::filesystem::path& run_dir, uint64_t seed) {
  return run_dir / ("seed_" + std::to_string(seed));
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  const auto problems = validate_config(config);
  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
  const std::string hash = config_hash(config);
  const auto run_dir = resolve_output_root(config) / hash;
  if (std::filesystem::exists(run_dir)) {
    if (!options.force) {
      throw RunExistsError("run " + hash + " already exists at " + run_dir.string() + " (use --force to overwrite)");
    }
    std::filesystem::remove_all(run_dir);
  }
  auto dataset = load_dataset(config);
  const ClassPartition partition = split_classes(dataset->num_classes, config.num_tasks, config.partition_seed);
  const TaskStream stream = build_stream(dataset, partition, config.label_fraction, config.partition_seed);

  std::filesystem::create_directories(run_dir);
  write_text_file(run_dir / "config.json", config_to_json(config) + "\n");
  write_text_file(run_dir / "partition.json", partition_to_json(partition) + "\n");
  write_text_file(run_dir / "manifest.json", build_manifest(config, hash, "running").dump(2) + "\n");

  ContinualOptions base;
  base.replay_fraction = config.replay_fraction;
  base.min_per_batch = config.min_per_batch;
  base.ssl = config.ssl;

  std::vector<SeedResult> results;
  for (uint64_t seed : config.seeds) {
    const auto dir = seed_dir(run_dir, seed);
    std::filesystem::create_directories(dir);
    try {
      std::ofstream log(dir / "loss_log.jsonl", std::ios::trunc);
      if (!log) throw std::runtime_error("cannot open loss log in " + dir.string());
      ContinualOptions opts = base;
      opts.sink = [&log](const LossRecord& r) { log << loss_record_to_json(r) << '\n'; };
      if (config.save_checkpoints) {
        opts.on_task_end = [&](int64_t t, ModelState& state, const ReplayBuffer& buffer) {
          json meta{{"hash", hash}, {"seed", seed}, {"task", t}, {"replay_buffer", json::parse(buffer.to_json())}};
          save_checkpoint(dir / "checkpoints" / ("task_" + std::to_string(t) + ".ckpt"), state, meta.dump());
        };
      }
      if (!options.quiet) std::cerr << "[" << hash << "] seed " << seed << ": continual run\n";
      ContinualResult result = run_continual(stream, config.architecture, config.ssl_kind, config.training, opts, seed);
      log.close();
      if (config.single_task_baselines && config.num_tasks >= 2) {
        if (!options.quiet) std::cerr << "[" << hash << "] seed " << seed << ": single-task baselines\n";
        const auto diag = run_single_task_baselines(stream, config.architecture, config.ssl_kind, config.training, base, seed);
        for (size_t k = 0; k < diag.size(); ++k) result.matrix.set_single(static_cast<int64_t>(k + 1), diag[k]);
        write_text_file(dir / "single_task.csv", result.matrix.single_to_csv());
      }
      write_text_file(dir / "accuracy_matrix.csv", result.matrix.to_csv());
      write_text_file(dir / "accuracy_matrix.json", result.matrix.to_json() + "\n");
      write_text_file(dir / "replay_buffer.json", result.buffer.to_json() + "\n");
      SeedResult sr{seed, result.matrix, compute_metrics(result.matrix)};
      write_text_file(dir / "metrics.json", metrics_to_json(sr.metrics) + "\n");
      results.push_back(std::move(sr));
    } catch (const std::exception& e) {
      const std::string message = std::string(e.what()) + "\n";
      write_text_file(dir / "FAILED", message);
      write_text_file(run_dir / "FAILED", "seed " + std::to_string(seed) + ": " + message);
      write_text_file(run_dir / "manifest.json", build_manifest(config, hash, "failed").dump(2) + "\n");
      throw;
    }
  }
  RunSummary summary = summarize_run(hash, config, std::move(results));
  summary.directory = run_dir;
  write_text_file(run_dir / "summary.json", summary_to_json(summary) + "\n");
  write_text_file(run_dir / "summary.txt", summary_table({summary}));
  write_text_file(run_dir / "manifest.json", build_manifest(config, hash, "complete").dump(2) + "\n");
  return summary;
}

std::vector<std::string> validate_run_directory(const std::filesystem::path& dir) {
  std::vector<std::string> p;
  if (!std::filesystem::is_directory(dir)) return {dir.string() + " is not a directory"};
  for (const char* f : {"config.json", "partition.json", "manifest.json", "summary.json", "summary.txt"}) {
    if (!std::filesystem::is_regular_file(dir / f)) p.push_back("missing " + std::string(f));
  }
  if (std::filesystem::exists(dir / "FAILED")) p.push_back("run is marked FAILED");
  if (!p.empty() && !std::filesystem::is_regular_file(dir / "config.json")) return p;
  ExperimentConfig config;
  try {
    config = load_config(dir / "config.json");
  } catch (const std::exception& e) {
    p.push_back(std::string("config.json: ") + e.what());
    return p;
  }
  const std::string hash = config_hash(config);
  if (dir.filename() != hash) p.push_back("directory name does not match config hash " + hash);
  try {
    const json m = json::parse(read_text_file(dir / "manifest.json"));
    if (m.value("hash", "") != hash) p.push_back("manifest hash does not match config hash");
    if (m.value("status", "") != "complete") p.push_back("manifest status is '" + m.value("status", "") + "'");
  } catch (const std::exception& e) {
    p.push_back(std::string("manifest.json: ") + e.what());
  }
  for (uint64_t seed : config.seeds) {
    const auto sd = seed_dir(dir, seed);
    const std::string tag = "seed_" + std::to_string(seed) + "/";
    if (std::filesystem::exists(sd / "FAILED")) p.push_back(tag + "FAILED present");
    for (const char* f : {"accuracy_matrix.csv", "accuracy_matrix.json", "metrics.json", "loss_log.jsonl", "replay_buffer.json"}) {
      if (!std::filesystem::is_regular_file(sd / f)) p.push_back("missing " + tag + f);
    }
    if (std::filesystem::is_regular_file(sd / "accuracy_matrix.csv")) {
      try {
        const auto m = AccuracyMatrix::from_csv(read_text_file(sd / "accuracy_matrix.csv"));
        if (m.num_tasks() != config.num_tasks || !m.complete()) p.push_back(tag + "accuracy_matrix.csv is incomplete");
      } catch (const std::exception& e) {
        p.push_back(tag + "accuracy_matrix.csv: " + e.what());
      }
    }
    if (config.training.effective_epochs() > 0 && std::filesystem::is_regular_file(sd / "loss_log.jsonl") &&
        std::filesystem::file_size(sd / "loss_log.jsonl") == 0) {
      p.push_back(tag + "loss_log.jsonl is empty");
    }
    if (config.single_task_baselines && config.num_tasks >= 2 && !std::filesystem::is_regular_file(sd / "single_task.csv")) {
      p.push_back("missing " + tag + "single_task.csv");
    }
    if (config.save_checkpoints) {
      for (int64_t t = 1; t <= config.num_tasks; ++t) {
        const auto ck = sd / "checkpoints" / ("task_" + std::to_string(t) + ".ckpt");
        if (!std::filesystem::is_regular_file(ck)) p.push_back("missing " + tag + "checkpoints/task_" + std::to_string(t) + ".ckpt");
      }
    }
  }
  return p;
}

RunSummary load_run(const std::filesystem::path& dir) {
  const auto config_path = dir / "config.json";
  if (!std::filesystem::is_regular_file(config_path)) throw DataError(dir.string() + " has no config.json");
  ExperimentConfig config = load_config(config_path);
  std::vector<SeedResult> seeds;
  for (uint64_t seed : config.seeds) {
    const auto sd = seed_dir(dir, seed);
    if (!std::filesystem::is_regular_file(sd / "accuracy_matrix.csv")) continue;
    AccuracyMatrix m = AccuracyMatrix::from_csv(read_text_file(sd / "accuracy_matrix.csv"));
    if (std::filesystem::is_regular_file(sd / "single_task.csv")) m.single_from_csv(read_text_file(sd / "single_task.csv"));
    seeds.push_back({seed, m, compute_metrics(m)});
  }
  if (seeds.empty()) throw DataError(dir.string() + " holds no completed seeds");
  RunSummary r = summarize_run(dir.filename().string(), std::move(config), std::move(seeds));
  r.directory = dir;
  return r;
}

}  // namespace kaizen
