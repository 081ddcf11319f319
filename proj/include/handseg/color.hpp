#pragma once

#include <array>

#include "handseg/image.hpp"

namespace handseg {

// Hue on the half-degree scale [0,180]; saturation and value on [0,255].
// Components stay real-valued so conversions invert without quantization.
struct HsvPixel {
  double h = 0.0;
  double s = 0.0;
  double v = 0.0;
};

struct Xyz {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct Lab {
  double l = 0.0;
  double a = 0.0;
  double b = 0.0;
};

// sRGB primaries, D65. Rows of the linear-RGB -> XYZ matrix sum to this.
inline constexpr Xyz kD65White{0.9505, 1.0000, 1.0890};

HsvPixel rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b);
inline HsvPixel rgb_to_hsv(Rgb c) { return rgb_to_hsv(c.r, c.g, c.b); }

// Inverse of rgb_to_hsv, rounded to the nearest 8-bit value.
Rgb hsv_to_rgb(const HsvPixel& hsv);

// Gamma-companded sRGB in, CIE XYZ with Y(white) = 1 out.
Xyz rgb_to_xyz(std::uint8_t r, std::uint8_t g, std::uint8_t b);
inline Xyz rgb_to_xyz(Rgb c) { return rgb_to_xyz(c.r, c.g, c.b); }

Lab xyz_to_lab(const Xyz& xyz, const Xyz& white = kD65White);

}  // namespace handseg
