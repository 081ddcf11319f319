#include <cmath>

#include "handseg/color.hpp"
#include "test_util.hpp"

using namespace handseg;

namespace {

// Independent reference: IEC 61966-2-1 companding and the published
// linear-sRGB -> XYZ matrix.
double linearize(double c) {
  c /= 255.0;
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

Xyz reference_xyz(int r, int g, int b) {
  const double R = linearize(r), G = linearize(g), B = linearize(b);
  return {0.4124 * R + 0.3576 * G + 0.1805 * B, 0.2126 * R + 0.7152 * G + 0.0722 * B,
          0.0193 * R + 0.1192 * G + 0.9505 * B};
}

}  // namespace

TEST(Hsv, Examples) {
  auto p = rgb_to_hsv(255, 0, 0);
  EXPECT_DOUBLE_EQ(p.h, 0);
  EXPECT_DOUBLE_EQ(p.s, 255);
  EXPECT_DOUBLE_EQ(p.v, 255);
  p = rgb_to_hsv(0, 0, 0);
  EXPECT_DOUBLE_EQ(p.h, 0);
  EXPECT_DOUBLE_EQ(p.s, 0);
  EXPECT_DOUBLE_EQ(p.v, 0);
  p = rgb_to_hsv(0, 255, 0);
  EXPECT_DOUBLE_EQ(p.h, 60);
  EXPECT_DOUBLE_EQ(p.s, 255);
  EXPECT_DOUBLE_EQ(p.v, 255);
  p = rgb_to_hsv(0, 0, 255);
  EXPECT_DOUBLE_EQ(p.h, 120);
}

TEST(Hsv, RangesHold) {
  for (int r = 0; r < 256; r += 5) {
    for (int g = 0; g < 256; g += 5) {
      for (int b = 0; b < 256; b += 5) {
        const auto p = rgb_to_hsv(r, g, b);
        ASSERT_GE(p.h, 0);
        ASSERT_LE(p.h, 180);
        ASSERT_GE(p.s, 0);
        ASSERT_LE(p.s, 255);
        ASSERT_GE(p.v, 0);
        ASSERT_LE(p.v, 255);
      }
    }
  }
}

TEST(Hsv, RoundTripWithinOne) {
  for (int r = 0; r < 256; r += 3) {
    for (int g = 0; g < 256; g += 3) {
      for (int b = 0; b < 256; b += 3) {
        const HsvPixel p = rgb_to_hsv(r, g, b);
        if (p.s <= 0) continue;
        const Rgb back = hsv_to_rgb(p);
        ASSERT_LE(std::abs(back.r - r), 1);
        ASSERT_LE(std::abs(back.g - g), 1);
        ASSERT_LE(std::abs(back.b - b), 1);
      }
    }
  }
}

TEST(Xyz, BlackAndWhite) {
  const Xyz k = rgb_to_xyz(0, 0, 0);
  EXPECT_DOUBLE_EQ(k.x, 0);
  EXPECT_DOUBLE_EQ(k.y, 0);
  EXPECT_DOUBLE_EQ(k.z, 0);
  const Xyz w = rgb_to_xyz(255, 255, 255);
  EXPECT_NEAR(w.x, 0.9505, 1e-3);
  EXPECT_NEAR(w.y, 1.0000, 1e-3);
  EXPECT_NEAR(w.z, 1.0890, 1e-3);
}

TEST(Xyz, MatchesReferenceMatrix) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> d(0, 255);
  for (int t = 0; t < 2000; ++t) {
    const int r = d(rng), g = d(rng), b = d(rng);
    const Xyz got = rgb_to_xyz(r, g, b);
    const Xyz want = reference_xyz(r, g, b);
    ASSERT_NEAR(got.x, want.x, 1e-4);
    ASSERT_NEAR(got.y, want.y, 1e-4);
    ASSERT_NEAR(got.z, want.z, 1e-4);
  }
  const Xyz gray = rgb_to_xyz(128, 128, 128);
  const Xyz ref = reference_xyz(128, 128, 128);
  EXPECT_NEAR(gray.y, ref.y, 1e-6);
}

TEST(Lab, WhiteAndBlack) {
  const Lab w = xyz_to_lab(kD65White);
  EXPECT_NEAR(w.l, 100, 1e-6);
  EXPECT_NEAR(w.a, 0, 1e-6);
  EXPECT_NEAR(w.b, 0, 1e-6);
  const Lab k = xyz_to_lab({0, 0, 0});
  EXPECT_NEAR(k.l, 0, 1e-9);
  EXPECT_NEAR(k.a, 0, 1e-9);
  EXPECT_NEAR(k.b, 0, 1e-9);
}

TEST(Lab, MidGrayLightnessByCubeRoot) {
  const Xyz g = rgb_to_xyz(128, 128, 128);
  const double yr = g.y / kD65White.y;
  ASSERT_GT(yr, 216.0 / 24389.0);
  const double want = 116.0 * std::cbrt(yr) - 16.0;
  EXPECT_NEAR(xyz_to_lab(g).l, want, 1e-9);
  EXPECT_NEAR(xyz_to_lab(g).l, 53.59, 0.01);  // commonly tabulated value
  // gray stays achromatic
  EXPECT_NEAR(xyz_to_lab(g).a, 0, 0.02);
  EXPECT_NEAR(xyz_to_lab(g).b, 0, 0.02);
}

TEST(Lab, LinearBranchBelowEpsilon) {
  const Xyz dark{0.001, 0.001, 0.001};
  const double want = 24389.0 / 27.0 * (0.001 / kD65White.y);
  EXPECT_NEAR(xyz_to_lab(dark).l, want, 1e-9);
}
