#include "handseg/colorseg.hpp"

#include <algorithm>
#include <cmath>

#include "handseg/blur.hpp"

namespace handseg {

BinaryMask threshold_hsv_presmoothed(const ColorFrame& smoothed, const HsvRange& range) {
  if (!range.valid()) {
    throw Error(ErrorCode::kInvalidParameter, "HSV range min exceeds max");
  }
  BinaryMask mask(smoothed.width(), smoothed.height());
  for (std::size_t i = 0; i < smoothed.size(); ++i) {
    mask[i] = range.contains(rgb_to_hsv(smoothed[i])) ? 1 : 0;
  }
  return mask;
}

BinaryMask threshold_hsv(const ColorFrame& frame, const HsvRange& range, double sigma) {
  return threshold_hsv_presmoothed(gaussian_blur(frame, sigma), range);
}

BinaryMask remove_small_components(const BinaryMask& mask, int min_area) {
  BinaryMask out = mask;
  if (min_area <= 1) return out;
  const int w = mask.width();
  const int h = mask.height();
  std::vector<std::uint8_t> seen(mask.size(), 0);
  std::vector<int> stack;
  std::vector<int> component;
  for (int start = 0; start < static_cast<int>(mask.size()); ++start) {
    if (!mask[start] || seen[start]) continue;
    component.clear();
    stack.assign(1, start);
    seen[start] = 1;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      component.push_back(p);
      const int px = p % w, py = p / w;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = px + dx, ny = py + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const int q = ny * w + nx;
          if (mask[q] && !seen[q]) {
            seen[q] = 1;
            stack.push_back(q);
          }
        }
      }
    }
    if (static_cast<int>(component.size()) < min_area) {
      for (int p : component) out[p] = 0;
    }
  }
  return out;
}

SeedRect enlarge_rect(const SeedRect& box, double factor, int image_width, int image_height) {
  const double cx = box.x0 + box.w / 2.0;
  const double cy = box.y0 + box.h / 2.0;
  const double half_w = box.w * factor / 2.0;
  const double half_h = box.h * factor / 2.0;
  // Small tolerance so exact products such as 100*1.1 do not round up a pixel.
  constexpr double kSlack = 1e-9;
  int x0 = static_cast<int>(std::floor(cx - half_w + kSlack));
  int y0 = static_cast<int>(std::floor(cy - half_h + kSlack));
  int x1 = static_cast<int>(std::ceil(cx + half_w - kSlack));
  int y1 = static_cast<int>(std::ceil(cy + half_h - kSlack));
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, image_width);
  y1 = std::min(y1, image_height);
  return {x0, y0, std::max(x1 - x0, 1), std::max(y1 - y0, 1)};
}

std::optional<SeedRect> seed_rect(const BinaryMask& mask) {
  int min_x = mask.width(), min_y = mask.height(), max_x = -1, max_y = -1;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      min_x = std::min(min_x, x);
      min_y = std::min(min_y, y);
      max_x = std::max(max_x, x);
      max_y = std::max(max_y, y);
    }
  }
  if (max_x < 0) return std::nullopt;
  const SeedRect tight{min_x, min_y, max_x - min_x + 1, max_y - min_y + 1};
  return enlarge_rect(tight, 1.10, mask.width(), mask.height());
}

namespace {

// Nearest-rank percentile of a sorted sample.
double percentile(const std::vector<double>& sorted, double p) {
  const double rank = p / 100.0 * (sorted.size() - 1);
  return sorted[static_cast<std::size_t>(std::lround(rank))];
}

HsvRange envelope(std::vector<HsvPixel> samples, Label target) {
  std::vector<double> h, s, v;
  for (const auto& p : samples) {
    h.push_back(p.h);
    s.push_back(p.s);
    v.push_back(p.v);
  }
  std::sort(h.begin(), h.end());
  std::sort(s.begin(), s.end());
  std::sort(v.begin(), v.end());
  return {{percentile(h, 2), percentile(s, 2), percentile(v, 2)},
          {percentile(h, 98), percentile(s, 98), percentile(v, 98)},
          target};
}

}  // namespace

std::pair<HsvRange, HsvRange> calibrate_ranges(std::span<const CalibrationSample> samples) {
  std::vector<HsvPixel> left, right;
  for (const auto& sample : samples) {
    if (sample.frame == nullptr) continue;
    const ColorFrame& f = *sample.frame;
    auto collect = [&](const std::vector<Scribble>& pts, std::vector<HsvPixel>& out) {
      for (const auto& p : pts) {
        if (!f.in_bounds(p.x, p.y)) {
          throw Error(ErrorCode::kOutOfRange, "scribble outside frame");
        }
        out.push_back(rgb_to_hsv(f(p.x, p.y)));
      }
    };
    collect(sample.left, left);
    collect(sample.right, right);
  }
  if (left.empty()) throw Error(ErrorCode::kCalibration, "no scribbles for the left glove");
  if (right.empty()) throw Error(ErrorCode::kCalibration, "no scribbles for the right glove");
  return {envelope(std::move(left), Label::kLeft), envelope(std::move(right), Label::kRight)};
}

CalibrationSample scribbles_from_mask(const ColorFrame& frame, const LabelMask& scribbles) {
  if (!frame.same_shape(scribbles)) {
    throw Error(ErrorCode::kDimensionMismatch, "scribble mask and frame differ in size");
  }
  CalibrationSample sample;
  sample.frame = &frame;
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      if (scribbles(x, y) == Label::kLeft) sample.left.push_back({x, y});
      if (scribbles(x, y) == Label::kRight) sample.right.push_back({x, y});
    }
  }
  return sample;
}

}  // namespace handseg
