// SPDX-License-Identifier: Apache-2.0

#include "kaizen/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include "kaizen/errors.hpp"

#ifdef KAIZEN_HAVE_PNG
#include <png.h>
#endif

namespace kaizen {

namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

int64_t read_pnm_int(std::istream& in) {
  int c = in.peek();
  while (in && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else {
      in.get();
    }
    c = in.peek();
  }
  int64_t v = -1;
  in >> v;
  return v;
}

DecodedImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  std::string magic;
  in >> magic;
  const bool gray = magic == "P5" || magic == "P2";
  const bool ascii = magic == "P2" || magic == "P3";
  if (magic != "P5" && magic != "P6" && magic != "P2" && magic != "P3") {
    throw DataError("unsupported PNM magic '" + magic + "' in " + path.string());
  }
  const int64_t w = read_pnm_int(in);
  const int64_t h = read_pnm_int(in);
  const int64_t maxval = read_pnm_int(in);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw DataError("malformed PNM header in " + path.string());
  const int64_t src_c = gray ? 1 : 3;
  std::vector<uint8_t> hwc(static_cast<size_t>(w * h * src_c));
  if (ascii) {
    for (auto& v : hwc) v = static_cast<uint8_t>(read_pnm_int(in) * 255 / maxval);
  } else {
    in.get();
    in.read(reinterpret_cast<char*>(hwc.data()), static_cast<std::streamsize>(hwc.size()));
  }
  if (!in) throw DataError("truncated image data in " + path.string());
  DecodedImage img;
  img.channels = 3;
  img.height = h;
  img.width = w;
  img.pixels.resize(static_cast<size_t>(3 * w * h));
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < w * h; ++i) img.pixels[c * w * h + i] = hwc[i * src_c + (gray ? 0 : c)];
  return img;
}

#ifdef KAIZEN_HAVE_PNG
DecodedImage read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw DataError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<uint8_t> hwc(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, hwc.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DataError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  DecodedImage img;
  img.height = image.height;
  img.width = image.width;
  const int64_t hw = img.height * img.width;
  img.pixels.resize(static_cast<size_t>(3 * hw));
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < hw; ++i) img.pixels[c * hw + i] = hwc[i * 3 + c];
  return img;
}
#endif

}  // namespace

DecodedImage read_image(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return read_pnm(path);
  if (ext == ".png") {
#ifdef KAIZEN_HAVE_PNG
    return read_png(path);
#else
    throw DataError("PNG support not compiled in: " + path.string());
#endif
  }
  throw DataError("unsupported image format: " + path.string());
}

void write_ppm(const std::filesystem::path& path, const DecodedImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  const int64_t hw = image.height * image.width;
  for (int64_t i = 0; i < hw; ++i)
    for (int64_t c = 0; c < 3; ++c) {
      const int64_t src = image.channels == 1 ? 0 : c;
      out.put(static_cast<char>(image.pixels[src * hw + i]));
    }
}

DecodedImage resize_bilinear(const DecodedImage& image, int64_t height, int64_t width) {
  if (image.height == height && image.width == width) return image;
  DecodedImage out;
  out.channels = image.channels;
  out.height = height;
  out.width = width;
  out.pixels.resize(static_cast<size_t>(image.channels * height * width));
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  for (int64_t c = 0; c < image.channels; ++c) {
    const uint8_t* src = image.pixels.data() + c * image.height * image.width;
    for (int64_t y = 0; y < height; ++y) {
      const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
      const auto y0 = static_cast<int64_t>(fy);
      const int64_t y1 = std::min(y0 + 1, image.height - 1);
      const double wy = fy - static_cast<double>(y0);
      for (int64_t x = 0; x < width; ++x) {
        const double fx =
            std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
        const auto x0 = static_cast<int64_t>(fx);
        const int64_t x1 = std::min(x0 + 1, image.width - 1);
        const double wx = fx - static_cast<double>(x0);
        const double v = (1 - wy) * ((1 - wx) * src[y0 * image.width + x0] + wx * src[y0 * image.width + x1]) +
                         wy * ((1 - wx) * src[y1 * image.width + x0] + wx * src[y1 * image.width + x1]);
        out.pixels[(c * height + y) * width + x] = static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

}  // namespace kaizen
