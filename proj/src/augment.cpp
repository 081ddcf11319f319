#include "handseg/augment.hpp"

#include <algorithm>
#include <cmath>

namespace handseg {

void AugmentSpec::validate() const {
  if (std::abs(translate_x) > kMaxTranslate || std::abs(translate_y) > kMaxTranslate) {
    throw Error(ErrorCode::kInvalidParameter, "translation outside [-0.2, 0.2]");
  }
  if (!(scale >= 1.0 / kMaxScale - 1e-12 && scale <= kMaxScale + 1e-12)) {
    throw Error(ErrorCode::kInvalidParameter, "scale outside [1/1.2, 1.2]");
  }
}

AugmentSpec sample_augment(std::mt19937_64& rng, const AugmentRanges& ranges) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> shift(-ranges.max_translate, ranges.max_translate);
  const double log_max = std::log(ranges.max_scale);
  std::uniform_real_distribution<double> log_scale(-log_max, log_max);
  AugmentSpec spec;
  spec.flip = unit(rng) < ranges.flip_probability;
  spec.translate_x = shift(rng);
  spec.translate_y = shift(rng);
  spec.scale = std::exp(log_scale(rng));
  return spec;
}

namespace {

Label swap_hands(Label l) {
  switch (l) {
    case Label::kLeft: return Label::kRight;
    case Label::kRight: return Label::kLeft;
    default: return l;
  }
}

}  // namespace

namespace {

// Calls fn(x, y, sx, sy) for every output pixel whose source lies inside the
// frame.
template <typename Fn>
void remap(int w, int h, const AugmentSpec& spec, Fn&& fn) {
  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;
  const double tx = spec.translate_x * w;
  const double ty = spec.translate_y * h;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Inverse of: flip, then zoom about the center, then translate.
      const double qx = (x - tx - cx) / spec.scale + cx;
      const double qy = (y - ty - cy) / spec.scale + cy;
      int sx = static_cast<int>(std::floor(qx + 0.5));
      const int sy = static_cast<int>(std::floor(qy + 0.5));
      if (spec.flip) sx = w - 1 - sx;
      if (sx < 0 || sy < 0 || sx >= w || sy >= h) continue;
      fn(x, y, sx, sy);
    }
  }
}

}  // namespace

std::pair<DepthFrame, LabelMask> augment(const DepthFrame& depth, const LabelMask& mask,
                                         const AugmentSpec& spec) {
  spec.validate();
  if (!depth.same_shape(mask)) {
    throw Error(ErrorCode::kDimensionMismatch, "depth and mask differ in size");
  }
  DepthFrame out_depth(depth.width(), depth.height(), 0);
  LabelMask out_mask(depth.width(), depth.height(), Label::kBackground);
  remap(depth.width(), depth.height(), spec, [&](int x, int y, int sx, int sy) {
    out_depth(x, y) = depth(sx, sy);
    out_mask(x, y) = spec.flip ? swap_hands(mask(sx, sy)) : mask(sx, sy);
  });
  return {std::move(out_depth), std::move(out_mask)};
}

ColorFrame augment_color(const ColorFrame& color, const AugmentSpec& spec) {
  spec.validate();
  ColorFrame out(color.width(), color.height(), Rgb{});
  remap(color.width(), color.height(), spec,
        [&](int x, int y, int sx, int sy) { out(x, y) = color(sx, sy); });
  return out;
}

DoubleRaster normalize_depth(const DepthFrame& depth) {
  double sum = 0.0;
  std::size_t valid = 0;
  for (std::uint16_t d : depth.pixels()) {
    if (d != 0) {
      sum += d;
      ++valid;
    }
  }
  if (valid == 0) throw Error(ErrorCode::kEmptyInput, "frame has no valid depth");
  const double mean = sum / static_cast<double>(valid);
  DoubleRaster out(depth.width(), depth.height(), 0.0);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (depth[i] != 0) out[i] = depth[i] / mean;
  }
  return out;
}

ClassFrequencies class_frequencies(std::span<const LabelMask> masks) {
  std::array<std::uint64_t, kNumClasses> counts{};
  std::uint64_t total = 0;
  for (const auto& m : masks) {
    for (Label l : m.pixels()) ++counts[static_cast<int>(l)];
    total += m.size();
  }
  if (total == 0) throw Error(ErrorCode::kEmptyInput, "no pixels to count");
  ClassFrequencies f{};
  for (int c = 0; c < kNumClasses; ++c) f[c] = static_cast<double>(counts[c]) / total;
  return f;
}

std::array<double, kNumClasses> class_weights(const ClassFrequencies& frequencies) {
  for (int c = 0; c < kNumClasses; ++c) {
    if (!(frequencies[c] > 0.0)) {
      throw Error(ErrorCode::kMissingClass,
                  std::string("class ") + std::to_string(c) + " absent from the dataset");
    }
  }
  std::array<double, kNumClasses> sorted = frequencies;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[kNumClasses / 2];
  std::array<double, kNumClasses> w{};
  for (int c = 0; c < kNumClasses; ++c) w[c] = median / frequencies[c];
  return w;
}

std::array<double, kNumClasses> class_weights(std::span<const LabelMask> masks) {
  return class_weights(class_frequencies(masks));
}

}  // namespace handseg
