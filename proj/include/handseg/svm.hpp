#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "handseg/image.hpp"

namespace handseg {

inline constexpr int kFeatureDim = 14;
using FeatureVector = std::array<double, kFeatureDim>;

// RGB, HSV, XYZ, Lab and (x, y), each affinely scaled to [0,1]:
// RGB/S/V by 255, H by 180, XYZ by the D65 white, L by 100, a and b shifted
// by 128 and divided by 255, coordinates by (width-1, height-1).
FeatureVector extract_features(const ColorFrame& frame, int x, int y);
std::vector<FeatureVector> extract_all_features(const ColorFrame& frame);

inline constexpr double kDefaultSvmC = 900.0;

struct SvmModel {
  FeatureVector weights{};
  double bias = 0.0;
  double c = kDefaultSvmC;

  double decision(const FeatureVector& x) const noexcept {
    double s = bias;
    for (int k = 0; k < kFeatureDim; ++k) s += weights[k] * x[k];
    return s;
  }
  int predict(const FeatureVector& x) const noexcept { return decision(x) >= 0.0 ? 1 : -1; }
};

struct SvmOptions {
  double c = kDefaultSvmC;
  double tolerance = 1e-9;  // duality gap relative to 1 + objective
  std::int64_t max_iterations = 200;
};

struct SvmTrainInfo {
  std::int64_t iterations = 0;
  bool converged = false;
};

// Soft-margin linear SVM, minimizing 0.5*|w|^2 + C * sum(hinge), with an
// unregularized bias. Solved by a primal-dual interior point method. Labels must be +1 / -1 and
// both classes present (kSingleClass otherwise).
SvmModel train_svm(std::span<const FeatureVector> samples, std::span<const int> labels,
                   const SvmOptions& options = {}, SvmTrainInfo* info = nullptr);

double svm_objective(const SvmModel& model, std::span<const FeatureVector> samples,
                     std::span<const int> labels);

struct RefineConfig {
  SvmOptions svm;
  int max_samples_per_side = 50'000;
  std::uint64_t seed = 0;
};

struct HandRefinement {
  bool present = false;   // GrabCut mask non-empty
  bool trained = false;   // an SVM was fitted (needs pixels outside the mask)
  SvmModel model;
  int input_pixels = 0;
  int kept_pixels = 0;
};

struct RefineResult {
  LabelMask labels;
  HandRefinement left;
  HandRefinement right;
};

// Per hand, fits an SVM separating that hand's GrabCut pixels from a uniform
// sample of all other pixels and keeps the GrabCut pixels with a non-negative
// decision value. Pixels kept by both hands go to the larger decision value.
RefineResult refine_labels(const ColorFrame& frame, const BinaryMask& left,
                           const BinaryMask& right, const RefineConfig& config = {});

}  // namespace handseg
