// SPDX-License-Identifier: Apache-2.0
//
// Labelled image datasets held as 8-bit CHW pixels, plus the ingestion
// paths: CIFAR binary batches (32x32), ImageNet-style class folders
// (resized, 224x224 by default), a flat directory with an index file, and a
// procedural generator for tests and desk-scale runs.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace kaizen {

struct ImageSet {
  int64_t channels = 3;
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> pixels;  // [N, C, H, W]
  std::vector<int32_t> labels;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  int64_t image_size() const { return channels * height * width; }
  std::span<const uint8_t> image(int64_t index) const;
  void append(std::span<const uint8_t> chw, int32_t label);
};

struct Dataset {
  std::string name;
  int64_t num_classes = 0;
  ImageSet train;
  ImageSet test;
};

struct SyntheticSpec {
  int64_t num_classes = 10;
  int64_t train_per_class = 100;
  int64_t test_per_class = 40;
  int64_t image_size = 32;
  double noise = 0.06;
  uint64_t seed = 7;
  // When set, a class is a (shape, hue) pair over m = ceil(n / 2) shapes and
  // m hues, and every shape and every hue is shared by two classes. Only the
  // conjunction identifies a class, as with overlapping natural categories.
  bool shared_attributes = false;
};

// Ten shape families (disk, square, triangle, ring, plus, stripes in three
// orientations, checkerboard, cross) each with a class hue; position, scale,
// colours and pixel noise vary per sample.
Dataset make_synthetic_dataset(const SyntheticSpec& spec);

// `variant` is 10 or 100; reads data_batch_*.bin/test_batch.bin or
// train.bin/test.bin from `directory`.
Dataset load_cifar_binary(const std::filesystem::path& directory, int variant);

// <root>/train/<class>/<image> and <root>/val/<class>/<image> (or test/);
// classes are the sorted train sub-directory names.
Dataset load_image_folder(const std::filesystem::path& root, int64_t image_size);

// <root>/index.tsv with lines "<train|test>\t<relative image path>\t<class-id>".
Dataset load_indexed_directory(const std::filesystem::path& root, int64_t image_size);

// Checks labels cover [0, num_classes) in the train split.
void validate_dataset(const Dataset& dataset);

}  // namespace kaizen
