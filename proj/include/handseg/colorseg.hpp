#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "handseg/color.hpp"
#include "handseg/image.hpp"

namespace handseg {

// Closed HSV box. Hue wraparound is not representable; callers union two
// ranges for colors straddling hue 0.
struct HsvRange {
  HsvPixel min;
  HsvPixel max;
  Label target = Label::kLeft;

  bool contains(const HsvPixel& p) const noexcept {
    return p.h >= min.h && p.h <= max.h && p.s >= min.s && p.s <= max.s &&
           p.v >= min.v && p.v <= max.v;
  }
  bool valid() const noexcept {
    return min.h <= max.h && min.s <= max.s && min.v <= max.v;
  }
};

// Default glove ranges (H on [0,180], S and V on [0,255]).
inline constexpr HsvRange kDefaultLeftRange{{3, 160, 100}, {15, 255, 255}, Label::kLeft};
inline constexpr HsvRange kDefaultRightRange{{28, 35, 100}, {70, 200, 255}, Label::kRight};

inline constexpr int kDefaultMinComponentArea = 64;

struct SeedRect {
  int x0 = 0;
  int y0 = 0;
  int w = 1;
  int h = 1;

  bool contains(int x, int y) const noexcept {
    return x >= x0 && y >= y0 && x < x0 + w && y < y0 + h;
  }
  friend bool operator==(const SeedRect&, const SeedRect&) = default;
};

// Thresholds the Gaussian-smoothed frame. A pixel is set iff its smoothed
// HSV lies inside `range` (inclusive on every channel).
BinaryMask threshold_hsv(const ColorFrame& frame, const HsvRange& range, double sigma);

// Same test on an already-smoothed frame, so both hands can share one blur.
BinaryMask threshold_hsv_presmoothed(const ColorFrame& smoothed, const HsvRange& range);

// Clears 8-connected components with fewer than `min_area` pixels.
BinaryMask remove_small_components(const BinaryMask& mask, int min_area);

// Tight bounding box grown by 10% in width and height about its center,
// rounded outward and clamped to the image. Absent for an empty mask.
std::optional<SeedRect> seed_rect(const BinaryMask& mask);

// Grows a box by `factor` about its center (outward rounding), then clamps.
SeedRect enlarge_rect(const SeedRect& box, double factor, int image_width, int image_height);

struct Scribble {
  int x = 0;
  int y = 0;
};

struct CalibrationSample {
  const ColorFrame* frame = nullptr;
  std::vector<Scribble> left;
  std::vector<Scribble> right;
};

// Per-hand [2nd, 98th] percentile envelope of the scribbled pixels' HSV.
// Throws kCalibration when a hand has no scribbles.
std::pair<HsvRange, HsvRange> calibrate_ranges(std::span<const CalibrationSample> samples);

// Builds calibration samples from label-format scribble masks (1 = left
// glove, 2 = right glove, 0 = unmarked).
CalibrationSample scribbles_from_mask(const ColorFrame& frame, const LabelMask& scribbles);

}  // namespace handseg
