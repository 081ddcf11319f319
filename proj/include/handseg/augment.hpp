#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

#include "handseg/image.hpp"

namespace handseg {

// One concrete augmentation. Translations are fractions of the frame size,
// scale is a zoom factor about the frame center.
struct AugmentSpec {
  bool flip = false;
  double translate_x = 0.0;
  double translate_y = 0.0;
  double scale = 1.0;

  static constexpr double kMaxTranslate = 0.2;
  static constexpr double kMaxScale = 1.2;

  void validate() const;
};

struct AugmentRanges {
  double flip_probability = 0.5;
  double max_translate = AugmentSpec::kMaxTranslate;
  double max_scale = AugmentSpec::kMaxScale;  // log-uniform in [1/max, max]
};

AugmentSpec sample_augment(std::mt19937_64& rng, const AugmentRanges& ranges = {});

// Horizontal flip swaps the left/right labels. Resampling is nearest
// neighbor; exposed regions become invalid depth and background.
std::pair<DepthFrame, LabelMask> augment(const DepthFrame& depth, const LabelMask& mask,
                                         const AugmentSpec& spec);
// Same geometry for the registered color frame; exposed pixels are black.
ColorFrame augment_color(const ColorFrame& color, const AugmentSpec& spec);

// Divides valid depths by their mean so valid pixels average 1; invalid
// pixels stay 0. Throws kEmptyInput for an all-invalid frame.
DoubleRaster normalize_depth(const DepthFrame& depth);

using ClassFrequencies = std::array<double, kNumClasses>;

ClassFrequencies class_frequencies(std::span<const LabelMask> masks);

// Median-frequency balancing: weight_c = median(freq) / freq_c. Throws
// kMissingClass when a class never occurs.
std::array<double, kNumClasses> class_weights(const ClassFrequencies& frequencies);
std::array<double, kNumClasses> class_weights(std::span<const LabelMask> masks);

}  // namespace handseg
