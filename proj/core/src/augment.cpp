// SPDX-License-Identifier: Apache-2.0

#include "kaizen/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kaizen::ssl {

AugmentationPolicy AugmentationPolicy::defaults(int64_t image_size) {
  AugmentationPolicy p;
  p.output_size = image_size;
  if (image_size >= 224) p.blur_probability = 0.5;
  return p;
}

AugmentationPolicy AugmentationPolicy::identity(int64_t image_size) {
  AugmentationPolicy p;
  p.output_size = image_size;
  p.crop_probability = 0.0;
  p.flip_probability = 0.0;
  p.jitter_probability = 0.0;
  p.grayscale_probability = 0.0;
  p.blur_probability = 0.0;
  return p;
}

namespace {

// Planar RGB image in [0, 1].
struct Planar {
  int64_t h = 0;
  int64_t w = 0;
  std::vector<double> v;  // [3, h, w]
  double& at(int64_t c, int64_t y, int64_t x) { return v[static_cast<size_t>((c * h + y) * w + x)]; }
  double at(int64_t c, int64_t y, int64_t x) const { return v[static_cast<size_t>((c * h + y) * w + x)]; }
};

Planar to_planar(std::span<const uint8_t> chw, int64_t h, int64_t w) {
  if (static_cast<int64_t>(chw.size()) != 3 * h * w) {
    throw std::invalid_argument("augment: expected a 3-channel image of " + std::to_string(h) + "x" + std::to_string(w));
  }
  Planar p{h, w, std::vector<double>(chw.size())};
  for (size_t i = 0; i < chw.size(); ++i) p.v[i] = static_cast<double>(chw[i]) / 255.0;
  return p;
}

Planar crop_resize(const Planar& src, int64_t top, int64_t left, int64_t ch, int64_t cw, int64_t out) {
  Planar dst{out, out, std::vector<double>(static_cast<size_t>(3 * out * out))};
  const double sy = static_cast<double>(ch) / static_cast<double>(out);
  const double sx = static_cast<double>(cw) / static_cast<double>(out);
  for (int64_t y = 0; y < out; ++y) {
    const double fy = std::clamp(static_cast<double>(top) + (static_cast<double>(y) + 0.5) * sy - 0.5,
                                 static_cast<double>(top), static_cast<double>(top + ch - 1));
    const auto y0 = static_cast<int64_t>(std::floor(fy));
    const int64_t y1 = std::min(y0 + 1, top + ch - 1);
    const double wy = fy - static_cast<double>(y0);
    for (int64_t x = 0; x < out; ++x) {
      const double fx = std::clamp(static_cast<double>(left) + (static_cast<double>(x) + 0.5) * sx - 0.5,
                                   static_cast<double>(left), static_cast<double>(left + cw - 1));
      const auto x0 = static_cast<int64_t>(std::floor(fx));
      const int64_t x1 = std::min(x0 + 1, left + cw - 1);
      const double wx = fx - static_cast<double>(x0);
      for (int64_t c = 0; c < 3; ++c) {
        const double a = src.at(c, y0, x0);
        const double b = src.at(c, y0, x1);
        const double d = src.at(c, y1, x0);
        const double e = src.at(c, y1, x1);
        // Exact on constant input: convex weights applied to equal values.
        dst.at(c, y, x) = (a == b && a == d && a == e) ? a : (1 - wy) * ((1 - wx) * a + wx * b) + wy * ((1 - wx) * d + wx * e);
      }
    }
  }
  return dst;
}

Planar random_resized_crop(const Planar& src, const AugmentationPolicy& p, Rng& rng) {
  const double area = static_cast<double>(src.h * src.w);
  const double log_lo = std::log(p.crop_ratio_min);
  const double log_hi = std::log(p.crop_ratio_max);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(p.crop_scale_min, p.crop_scale_max);
    const double ratio = std::exp(rng.uniform(log_lo, log_hi));
    const auto cw = static_cast<int64_t>(std::lround(std::sqrt(target * ratio)));
    const auto ch = static_cast<int64_t>(std::lround(std::sqrt(target / ratio)));
    if (cw > 0 && ch > 0 && cw <= src.w && ch <= src.h) {
      const auto top = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(src.h - ch + 1)));
      const auto left = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(src.w - cw + 1)));
      return crop_resize(src, top, left, ch, cw, p.output_size);
    }
  }
  // Fallback: central crop clamped to the ratio range.
  const double in_ratio = static_cast<double>(src.w) / static_cast<double>(src.h);
  int64_t cw = src.w;
  int64_t ch = src.h;
  if (in_ratio < p.crop_ratio_min) {
    ch = static_cast<int64_t>(std::lround(static_cast<double>(cw) / p.crop_ratio_min));
  } else if (in_ratio > p.crop_ratio_max) {
    cw = static_cast<int64_t>(std::lround(static_cast<double>(ch) * p.crop_ratio_max));
  }
  return crop_resize(src, (src.h - ch) / 2, (src.w - cw) / 2, ch, cw, p.output_size);
}

void horizontal_flip(Planar& img) {
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < img.h; ++y)
      for (int64_t x = 0; x < img.w / 2; ++x) std::swap(img.at(c, y, x), img.at(c, y, img.w - 1 - x));
}

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

void blend(Planar& img, const std::vector<double>& other, double factor) {
  for (size_t i = 0; i < img.v.size(); ++i) img.v[i] = std::clamp(factor * img.v[i] + (1.0 - factor) * other[i], 0.0, 1.0);
}

std::vector<double> grayscale_planes(const Planar& img) {
  const int64_t hw = img.h * img.w;
  std::vector<double> g(img.v.size());
  for (int64_t i = 0; i < hw; ++i) {
    const double l = luma(img.v[i], img.v[hw + i], img.v[2 * hw + i]);
    g[i] = g[hw + i] = g[2 * hw + i] = l;
  }
  return g;
}

void adjust_hue(Planar& img, double shift) {
  const int64_t hw = img.h * img.w;
  for (int64_t i = 0; i < hw; ++i) {
    double r = img.v[i], g = img.v[hw + i], b = img.v[2 * hw + i];
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double delta = mx - mn;
    if (delta <= 0.0) continue;
    double h;
    if (mx == r) h = std::fmod((g - b) / delta, 6.0);
    else if (mx == g) h = (b - r) / delta + 2.0;
    else h = (r - g) / delta + 4.0;
    h = h / 6.0 + shift;
    h -= std::floor(h);
    const double s = delta / mx;
    const double v = mx;
    const double sector = h * 6.0;
    const int k = static_cast<int>(std::floor(sector)) % 6;
    const double f = sector - std::floor(sector);
    const double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
    switch (k) {
      case 0: r = v, g = t, b = p; break;
      case 1: r = q, g = v, b = p; break;
      case 2: r = p, g = v, b = t; break;
      case 3: r = p, g = q, b = v; break;
      case 4: r = t, g = p, b = v; break;
      default: r = v, g = p, b = q; break;
    }
    img.v[i] = r, img.v[hw + i] = g, img.v[2 * hw + i] = b;
  }
}

void color_jitter(Planar& img, const AugmentationPolicy& p, Rng& rng) {
  // Transform order is itself random, as in the reference recipe.
  std::vector<int> order{0, 1, 2, 3};
  rng.shuffle(order);
  const double bf = rng.uniform(std::max(0.0, 1.0 - p.brightness), 1.0 + p.brightness);
  const double cf = rng.uniform(std::max(0.0, 1.0 - p.contrast), 1.0 + p.contrast);
  const double sf = rng.uniform(std::max(0.0, 1.0 - p.saturation), 1.0 + p.saturation);
  const double hf = rng.uniform(-p.hue, p.hue);
  for (int op : order) {
    switch (op) {
      case 0:
        if (p.brightness > 0) blend(img, std::vector<double>(img.v.size(), 0.0), bf);
        break;
      case 1:
        if (p.contrast > 0) {
          const auto g = grayscale_planes(img);
          double m = 0.0;
          for (int64_t i = 0; i < img.h * img.w; ++i) m += g[static_cast<size_t>(i)];
          m /= static_cast<double>(img.h * img.w);
          blend(img, std::vector<double>(img.v.size(), m), cf);
        }
        break;
      case 2:
        if (p.saturation > 0) blend(img, grayscale_planes(img), sf);
        break;
      default:
        if (p.hue > 0) adjust_hue(img, hf);
        break;
    }
  }
}

void gaussian_blur(Planar& img, double sigma) {
  const int64_t radius = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<size_t>(2 * radius + 1));
  double s = 0.0;
  for (int64_t i = -radius; i <= radius; ++i) {
    k[static_cast<size_t>(i + radius)] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    s += k[static_cast<size_t>(i + radius)];
  }
  for (double& v : k) v /= s;
  Planar tmp = img;
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < img.h; ++y)
      for (int64_t x = 0; x < img.w; ++x) {
        double acc = 0.0;
        for (int64_t i = -radius; i <= radius; ++i) {
          acc += k[static_cast<size_t>(i + radius)] * img.at(c, y, std::clamp<int64_t>(x + i, 0, img.w - 1));
        }
        tmp.at(c, y, x) = acc;
      }
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < img.h; ++y)
      for (int64_t x = 0; x < img.w; ++x) {
        double acc = 0.0;
        for (int64_t i = -radius; i <= radius; ++i) {
          acc += k[static_cast<size_t>(i + radius)] * tmp.at(c, std::clamp<int64_t>(y + i, 0, img.h - 1), x);
        }
        img.at(c, y, x) = acc;
      }
}

Tensor normalize(const Planar& img, const AugmentationPolicy& p) {
  Tensor out({3, img.h, img.w});
  const int64_t hw = img.h * img.w;
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < hw; ++i) out[c * hw + i] = (img.v[static_cast<size_t>(c * hw + i)] - p.mean[c]) / p.stddev[c];
  return out;
}

Planar resize_to(const Planar& img, int64_t size) {
  if (img.h == size && img.w == size) return img;
  return crop_resize(img, 0, 0, img.h, img.w, size);
}

}  // namespace

Tensor augment(std::span<const uint8_t> chw, int64_t height, int64_t width, const AugmentationPolicy& policy, Rng& rng) {
  Planar img = to_planar(chw, height, width);
  // One draw per gate regardless of outcome keeps stream positions aligned.
  if (rng.bernoulli(policy.crop_probability)) {
    img = random_resized_crop(img, policy, rng);
  } else {
    img = resize_to(img, policy.output_size);
  }
  if (rng.bernoulli(policy.flip_probability)) horizontal_flip(img);
  if (rng.bernoulli(policy.jitter_probability)) color_jitter(img, policy, rng);
  if (rng.bernoulli(policy.grayscale_probability)) img.v = grayscale_planes(img);
  if (rng.bernoulli(policy.blur_probability)) gaussian_blur(img, rng.uniform(policy.blur_sigma_min, policy.blur_sigma_max));
  return normalize(img, policy);
}

ViewPair augment_pair(std::span<const uint8_t> chw, int64_t height, int64_t width, const AugmentationPolicy& policy,
                      Rng& rng, int64_t source) {
  ViewPair pair;
  pair.view1 = augment(chw, height, width, policy, rng);
  pair.view2 = augment(chw, height, width, policy, rng);
  pair.source = source;
  return pair;
}

Tensor preprocess(std::span<const uint8_t> chw, int64_t height, int64_t width, const AugmentationPolicy& policy) {
  return normalize(resize_to(to_planar(chw, height, width), policy.output_size), policy);
}

Tensor stack_images(std::span<const Tensor> images) {
  if (images.empty()) throw std::invalid_argument("stack_images: empty batch");
  Shape shape{static_cast<int64_t>(images.size())};
  for (int64_t d : images[0].shape()) shape.push_back(d);
  Tensor out(shape);
  const int64_t stride = images[0].numel();
  for (size_t i = 0; i < images.size(); ++i) {
    if (!images[i].same_shape(images[0])) throw std::invalid_argument("stack_images: mismatched image shapes");
    std::copy(images[i].data(), images[i].data() + stride, out.data() + static_cast<int64_t>(i) * stride);
  }
  return out;
}

}  // namespace kaizen::ssl
