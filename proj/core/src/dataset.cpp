// SPDX-License-Identifier: Apache-2.0

#include "kaizen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "kaizen/errors.hpp"
#include "kaizen/image_io.hpp"
#include "kaizen/rng.hpp"

namespace kaizen {

std::span<const uint8_t> ImageSet::image(int64_t index) const {
  if (index < 0 || index >= size()) throw std::out_of_range("image index " + std::to_string(index) + " out of range");
  return {pixels.data() + index * image_size(), static_cast<size_t>(image_size())};
}

void ImageSet::append(std::span<const uint8_t> chw, int32_t label) {
  if (static_cast<int64_t>(chw.size()) != image_size()) throw DataError("image size does not match the dataset layout");
  pixels.insert(pixels.end(), chw.begin(), chw.end());
  labels.push_back(label);
}

namespace {

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
  h = h - std::floor(h);
  const double i = std::floor(h * 6.0);
  const double f = h * 6.0 - i;
  const double p = v * (1 - s);
  const double q = v * (1 - f * s);
  const double t = v * (1 - (1 - f) * s);
  switch (static_cast<int>(i) % 6) {
    case 0: rgb[0] = v, rgb[1] = t, rgb[2] = p; break;
    case 1: rgb[0] = q, rgb[1] = v, rgb[2] = p; break;
    case 2: rgb[0] = p, rgb[1] = v, rgb[2] = t; break;
    case 3: rgb[0] = p, rgb[1] = q, rgb[2] = v; break;
    case 4: rgb[0] = t, rgb[1] = p, rgb[2] = v; break;
    default: rgb[0] = v, rgb[1] = p, rgb[2] = q; break;
  }
}

bool shape_mask(int family, double u, double v) {
  const double au = std::abs(u);
  const double av = std::abs(v);
  const bool in_box = au <= 1.0 && av <= 1.0;
  switch (family) {
    case 0: return u * u + v * v <= 1.0;
    case 1: return au <= 0.8 && av <= 0.8;
    case 2: return v >= -0.9 && v <= 0.8 && au <= (v + 0.9) * 0.6;
    case 3: {
      const double r = std::sqrt(u * u + v * v);
      return r >= 0.55 && r <= 1.0;
    }
    case 4: return (au <= 0.3 && av <= 1.0) || (av <= 0.3 && au <= 1.0);
    case 5: return in_box && static_cast<int>(std::floor((v + 1.0) * 2.5)) % 2 == 0;
    case 6: return in_box && static_cast<int>(std::floor((u + 1.0) * 2.5)) % 2 == 0;
    case 7: return in_box && static_cast<int>(std::floor((u + v + 2.0) * 2.0)) % 2 == 0;
    case 8: return in_box && (static_cast<int>(std::floor((u + 1.0) * 2.0)) + static_cast<int>(std::floor((v + 1.0) * 2.0))) % 2 == 0;
    default: return in_box && (std::abs(u - v) <= 0.35 || std::abs(u + v) <= 0.35);
  }
}

void synthesize(const SyntheticSpec& spec, int32_t label, Rng& rng, std::vector<uint8_t>& out) {
  const int64_t s = spec.image_size;
  int family = static_cast<int>(label % 10);
  int hue_index = label;
  if (spec.shared_attributes) {
    const int m = static_cast<int>((spec.num_classes + 1) / 2);
    family = (label % m) % 10;
    hue_index = (label % m + label / m) % m;
  }
  double fg[3];
  const double hue = static_cast<double>(hue_index) * 0.6180339887498949 + 0.05 + rng.uniform(-0.03, 0.03);
  hsv_to_rgb(hue, rng.uniform(0.6, 1.0), rng.uniform(0.7, 1.0), fg);
  double bg[3];
  for (double& c : bg) c = rng.uniform(0.05, 0.35);
  const double cx = rng.uniform(0.35, 0.65) * static_cast<double>(s);
  const double cy = rng.uniform(0.35, 0.65) * static_cast<double>(s);
  const double radius = rng.uniform(0.22, 0.34) * static_cast<double>(s);
  out.assign(static_cast<size_t>(3 * s * s), 0);
  for (int64_t y = 0; y < s; ++y)
    for (int64_t x = 0; x < s; ++x) {
      const double u = (static_cast<double>(x) + 0.5 - cx) / radius;
      const double v = (static_cast<double>(y) + 0.5 - cy) / radius;
      const bool inside = shape_mask(family, u, v);
      for (int64_t c = 0; c < 3; ++c) {
        const double base = inside ? fg[c] : bg[c];
        const double value = base + spec.noise * rng.normal();
        out[(c * s + y) * s + x] = static_cast<uint8_t>(std::clamp(std::lround(value * 255.0), 0L, 255L));
      }
    }
}

}  // namespace

Dataset make_synthetic_dataset(const SyntheticSpec& spec) {
  if (spec.num_classes <= 0 || spec.train_per_class <= 0 || spec.test_per_class <= 0 || spec.image_size < 8) {
    throw std::invalid_argument("synthetic dataset: counts must be positive and image_size >= 8");
  }
  Dataset ds;
  ds.name = (spec.shared_attributes ? "synthetic_shared" : "synthetic") + std::to_string(spec.num_classes);
  ds.num_classes = spec.num_classes;
  for (ImageSet* set : {&ds.train, &ds.test}) {
    set->channels = 3;
    set->height = spec.image_size;
    set->width = spec.image_size;
  }
  Rng train_rng(derive_seed(spec.seed, 1));
  Rng test_rng(derive_seed(spec.seed, 2));
  std::vector<uint8_t> img;
  // Interleave classes so that index order carries no class structure.
  for (int64_t i = 0; i < spec.train_per_class; ++i)
    for (int64_t c = 0; c < spec.num_classes; ++c) {
      synthesize(spec, static_cast<int32_t>(c), train_rng, img);
      ds.train.append(img, static_cast<int32_t>(c));
    }
  for (int64_t i = 0; i < spec.test_per_class; ++i)
    for (int64_t c = 0; c < spec.num_classes; ++c) {
      synthesize(spec, static_cast<int32_t>(c), test_rng, img);
      ds.test.append(img, static_cast<int32_t>(c));
    }
  return ds;
}

namespace {

void read_cifar_file(const std::filesystem::path& file, int label_bytes, ImageSet& out) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open CIFAR batch " + file.string());
  constexpr int64_t kImage = 3 * 32 * 32;
  std::vector<uint8_t> record(static_cast<size_t>(label_bytes + kImage));
  while (in.read(reinterpret_cast<char*>(record.data()), static_cast<std::streamsize>(record.size()))) {
    const int32_t label = record[static_cast<size_t>(label_bytes - 1)];
    out.append(std::span<const uint8_t>(record).subspan(static_cast<size_t>(label_bytes)), label);
  }
  if (in.gcount() != 0) throw DataError("trailing partial record in " + file.string());
}

}  // namespace

Dataset load_cifar_binary(const std::filesystem::path& directory, int variant) {
  if (variant != 10 && variant != 100) throw std::invalid_argument("CIFAR variant must be 10 or 100");
  Dataset ds;
  ds.name = "cifar" + std::to_string(variant);
  ds.num_classes = variant;
  for (ImageSet* set : {&ds.train, &ds.test}) {
    set->channels = 3;
    set->height = 32;
    set->width = 32;
  }
  const int label_bytes = variant == 10 ? 1 : 2;
  if (variant == 10) {
    for (int b = 1; b <= 5; ++b) read_cifar_file(directory / ("data_batch_" + std::to_string(b) + ".bin"), 1, ds.train);
    read_cifar_file(directory / "test_batch.bin", label_bytes, ds.test);
  } else {
    read_cifar_file(directory / "train.bin", label_bytes, ds.train);
    read_cifar_file(directory / "test.bin", label_bytes, ds.test);
  }
  validate_dataset(ds);
  return ds;
}

namespace {

bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

void append_resized(const std::filesystem::path& file, int64_t image_size, int32_t label, ImageSet& set) {
  DecodedImage img = resize_bilinear(read_image(file), image_size, image_size);
  set.append(img.pixels, label);
}

std::vector<std::filesystem::path> sorted_entries(const std::filesystem::path& dir, bool directories) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (directories ? e.is_directory() : (e.is_regular_file() && is_image_file(e.path()))) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

Dataset load_image_folder(const std::filesystem::path& root, int64_t image_size) {
  const auto train_dir = root / "train";
  auto test_dir = root / "val";
  if (!std::filesystem::is_directory(test_dir)) test_dir = root / "test";
  if (!std::filesystem::is_directory(train_dir) || !std::filesystem::is_directory(test_dir)) {
    throw DataError("image folder " + root.string() + " needs train/ and val/ (or test/) sub-directories");
  }
  Dataset ds;
  ds.name = root.filename().string();
  for (ImageSet* set : {&ds.train, &ds.test}) {
    set->channels = 3;
    set->height = image_size;
    set->width = image_size;
  }
  const auto classes = sorted_entries(train_dir, true);
  ds.num_classes = static_cast<int64_t>(classes.size());
  for (size_t c = 0; c < classes.size(); ++c) {
    for (const auto& f : sorted_entries(classes[c], false)) append_resized(f, image_size, static_cast<int32_t>(c), ds.train);
    const auto test_class = test_dir / classes[c].filename();
    if (!std::filesystem::is_directory(test_class)) throw DataError("missing test class directory " + test_class.string());
    for (const auto& f : sorted_entries(test_class, false)) append_resized(f, image_size, static_cast<int32_t>(c), ds.test);
  }
  validate_dataset(ds);
  return ds;
}

Dataset load_indexed_directory(const std::filesystem::path& root, int64_t image_size) {
  const auto index = root / "index.tsv";
  std::ifstream in(index);
  if (!in) throw DataError("cannot open label index " + index.string());
  Dataset ds;
  ds.name = root.filename().string();
  for (ImageSet* set : {&ds.train, &ds.test}) {
    set->channels = 3;
    set->height = image_size;
    set->width = image_size;
  }
  std::string line;
  int64_t line_no = 0;
  int32_t max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string split, rel;
    int64_t label = -1;
    if (!std::getline(fields, split, '\t') || !std::getline(fields, rel, '\t') || !(fields >> label) || label < 0) {
      throw DataError(index.string() + ":" + std::to_string(line_no) + ": expected <split>\\t<path>\\t<class-id>");
    }
    ImageSet* set = nullptr;
    if (split == "train") set = &ds.train;
    else if (split == "test") set = &ds.test;
    else throw DataError(index.string() + ":" + std::to_string(line_no) + ": unknown split '" + split + "'");
    append_resized(root / rel, image_size, static_cast<int32_t>(label), *set);
    max_label = std::max(max_label, static_cast<int32_t>(label));
  }
  ds.num_classes = max_label + 1;
  validate_dataset(ds);
  return ds;
}

void validate_dataset(const Dataset& dataset) {
  if (dataset.num_classes <= 0) throw DataError("dataset '" + dataset.name + "' has no classes");
  std::set<int32_t> seen;
  for (int32_t l : dataset.train.labels) {
    if (l < 0 || l >= dataset.num_classes) {
      throw DataError("dataset '" + dataset.name + "': label " + std::to_string(l) + " outside [0, " +
                      std::to_string(dataset.num_classes) + ")");
    }
    seen.insert(l);
  }
  if (static_cast<int64_t>(seen.size()) != dataset.num_classes) {
    std::ostringstream missing;
    for (int32_t c = 0; c < dataset.num_classes; ++c)
      if (!seen.count(c)) missing << ' ' << c;
    throw DataError("dataset '" + dataset.name + "' is missing training samples for classes:" + missing.str());
  }
  for (int32_t l : dataset.test.labels) {
    if (l < 0 || l >= dataset.num_classes) throw DataError("dataset '" + dataset.name + "': test label out of range");
  }
}

}  // namespace kaizen
