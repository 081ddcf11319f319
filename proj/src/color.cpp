#include "handseg/color.hpp"

#include <algorithm>
#include <cmath>

namespace handseg {

HsvPixel rgb_to_hsv(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  const double r = r8, g = g8, b = b8;
  const double vmax = std::max({r, g, b});
  const double vmin = std::min({r, g, b});
  const double chroma = vmax - vmin;

  HsvPixel out;
  out.v = vmax;
  out.s = vmax > 0.0 ? 255.0 * chroma / vmax : 0.0;
  if (chroma <= 0.0) return out;

  double degrees;
  if (vmax == r) {
    degrees = 60.0 * (g - b) / chroma;
  } else if (vmax == g) {
    degrees = 120.0 + 60.0 * (b - r) / chroma;
  } else {
    degrees = 240.0 + 60.0 * (r - g) / chroma;
  }
  if (degrees < 0.0) degrees += 360.0;
  out.h = degrees / 2.0;
  return out;
}

Rgb hsv_to_rgb(const HsvPixel& hsv) {
  const double v = hsv.v / 255.0;
  const double s = hsv.s / 255.0;
  const double hp = std::fmod(hsv.h * 2.0, 360.0) / 60.0;
  const double c = v * s;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  auto to8 = [](double t) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(t * 255.0), 0L, 255L));
  };
  return {to8(r + m), to8(g + m), to8(b + m)};
}

namespace {

double srgb_to_linear(std::uint8_t c8) {
  const double c = c8 / 255.0;
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  constexpr double kEpsilon = 216.0 / 24389.0;
  constexpr double kKappa = 24389.0 / 27.0;
  return t > kEpsilon ? std::cbrt(t) : (kKappa * t + 16.0) / 116.0;
}

}  // namespace

Xyz rgb_to_xyz(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  const double r = srgb_to_linear(r8);
  const double g = srgb_to_linear(g8);
  const double b = srgb_to_linear(b8);
  return {0.4124 * r + 0.3576 * g + 0.1805 * b,
          0.2126 * r + 0.7152 * g + 0.0722 * b,
          0.0193 * r + 0.1192 * g + 0.9505 * b};
}

Lab xyz_to_lab(const Xyz& xyz, const Xyz& white) {
  const double fx = lab_f(xyz.x / white.x);
  const double fy = lab_f(xyz.y / white.y);
  const double fz = lab_f(xyz.z / white.z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

}  // namespace handseg
