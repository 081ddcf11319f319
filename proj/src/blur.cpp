#include "handseg/blur.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace handseg {

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) {
    throw Error(ErrorCode::kInvalidParameter, "gaussian sigma must be > 0");
  }
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double w = std::exp(-0.5 * k * k / (sigma * sigma));
    taps[k + radius] = w;
    sum += w;
  }
  for (double& w : taps) w /= sum;
  return taps;
}

int mirror_index(int i, int n) {
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

namespace {

// Convolves `channels` interleaved planes along one axis.
template <int Channels>
void convolve_axis(const std::vector<std::array<double, Channels>>& src,
                   std::vector<std::array<double, Channels>>& dst, int width,
                   int height, const std::vector<double>& taps, bool horizontal) {
  const int radius = static_cast<int>(taps.size() / 2);
  const int n = horizontal ? width : height;
  std::vector<int> lookup(n + 2 * radius);
  for (int i = 0; i < n + 2 * radius; ++i) lookup[i] = mirror_index(i - radius, n);

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      std::array<double, Channels> acc{};
      const int center = horizontal ? x : y;
      for (int k = -radius; k <= radius; ++k) {
        const int j = lookup[center + k + radius];
        const auto& p = horizontal ? src[static_cast<std::size_t>(y) * width + j]
                                   : src[static_cast<std::size_t>(j) * width + x];
        const double w = taps[k + radius];
        for (int c = 0; c < Channels; ++c) acc[c] += w * p[c];
      }
      dst[static_cast<std::size_t>(y) * width + x] = acc;
    }
  }
}

template <int Channels>
std::vector<std::array<double, Channels>> blur_planes(
    std::vector<std::array<double, Channels>> planes, int width, int height,
    double sigma) {
  const auto taps = gaussian_kernel(sigma);
  std::vector<std::array<double, Channels>> tmp(planes.size());
  convolve_axis<Channels>(planes, tmp, width, height, taps, true);
  convolve_axis<Channels>(tmp, planes, width, height, taps, false);
  return planes;
}

}  // namespace

FloatRaster gaussian_blur(const FloatRaster& image, double sigma) {
  std::vector<std::array<double, 1>> planes(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) planes[i][0] = image[i];
  planes = blur_planes<1>(std::move(planes), image.width(), image.height(), sigma);
  FloatRaster out(image.width(), image.height());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(planes[i][0]);
  return out;
}

ColorFrame gaussian_blur(const ColorFrame& frame, double sigma) {
  std::vector<std::array<double, 3>> planes(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    planes[i] = {double(frame[i].r), double(frame[i].g), double(frame[i].b)};
  }
  planes = blur_planes<3>(std::move(planes), frame.width(), frame.height(), sigma);
  ColorFrame out(frame.width(), frame.height());
  auto to8 = [](double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  };
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = {to8(planes[i][0]), to8(planes[i][1]), to8(planes[i][2])};
  }
  return out;
}

}  // namespace handseg
