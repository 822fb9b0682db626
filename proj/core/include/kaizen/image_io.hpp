// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace kaizen {

struct DecodedImage {
  int64_t channels = 3;
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> pixels;  // CHW
};

// Reads binary/ASCII PPM and PGM, and PNG when built with libpng. Grayscale
// inputs are replicated to three channels.
DecodedImage read_image(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const DecodedImage& image);

// Bilinear resize of a CHW image.
DecodedImage resize_bilinear(const DecodedImage& image, int64_t height, int64_t width);

}  // namespace kaizen
