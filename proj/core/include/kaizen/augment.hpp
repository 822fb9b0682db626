// SPDX-License-Identifier: Apache-2.0
//
// Stochastic two-view augmentation: random resized crop, horizontal flip,
// colour jitter, random grayscale and (at 224x224) Gaussian blur, followed
// by per-channel normalisation.

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "kaizen/rng.hpp"
#include "kaizen/tensor.hpp"

namespace kaizen::ssl {

struct AugmentationPolicy {
  int64_t output_size = 32;

  double crop_probability = 1.0;
  double crop_scale_min = 0.08;
  double crop_scale_max = 1.0;
  double crop_ratio_min = 3.0 / 4.0;
  double crop_ratio_max = 4.0 / 3.0;

  double flip_probability = 0.5;

  double jitter_probability = 0.8;
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.2;
  double hue = 0.1;

  double grayscale_probability = 0.2;

  double blur_probability = 0.0;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;

  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> stddev{0.25, 0.25, 0.25};

  // Default recipe; blur is enabled only for inputs of at least 224 pixels.
  static AugmentationPolicy defaults(int64_t image_size);
  // Every transform disabled: views equal the normalised input.
  static AugmentationPolicy identity(int64_t image_size);
};

struct ViewPair {
  Tensor view1;  // [C, H, W]
  Tensor view2;
  int64_t source = -1;
};

// Applies the policy once to an 8-bit CHW image with three channels.
Tensor augment(std::span<const uint8_t> chw, int64_t height, int64_t width, const AugmentationPolicy& policy, Rng& rng);

// Two independent draws of the policy; view1 is drawn first.
ViewPair augment_pair(std::span<const uint8_t> chw, int64_t height, int64_t width, const AugmentationPolicy& policy,
                      Rng& rng, int64_t source = -1);

// Normalises without augmentation (evaluation path); resizes if needed.
Tensor preprocess(std::span<const uint8_t> chw, int64_t height, int64_t width, const AugmentationPolicy& policy);

// Stacks [C, H, W] tensors into [N, C, H, W].
Tensor stack_images(std::span<const Tensor> images);

}  // namespace kaizen::ssl
