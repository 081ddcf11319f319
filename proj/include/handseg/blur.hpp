#pragma once

#include <vector>

#include "handseg/image.hpp"

namespace handseg {

// Pipeline default for the pre-threshold smoothing, in pixels at 640x480.
inline constexpr double kDefaultBlurSigma = 30.0;

// Normalized 1D Gaussian taps for offsets -r..r, r = ceil(3*sigma).
std::vector<double> gaussian_kernel(double sigma);

// Symmetric (edge-duplicating) reflection of an arbitrary index into [0, n).
int mirror_index(int i, int n);

// Separable Gaussian convolution with mirrored borders. Throws
// kInvalidParameter for sigma <= 0.
FloatRaster gaussian_blur(const FloatRaster& image, double sigma);

// Per-channel blur; results are rounded back to 8 bits.
ColorFrame gaussian_blur(const ColorFrame& frame, double sigma);

}  // namespace handseg
