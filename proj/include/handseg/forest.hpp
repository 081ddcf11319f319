#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "handseg/image.hpp"

namespace handseg {

// Probe offsets in pixel*meters; dividing by the center depth in meters gives
// pixels, which makes the feature depth invariant.
struct OffsetPair {
  float ux = 0, uy = 0;
  float vx = 0, vy = 0;
};

struct FeatureConfig {
  double background_mm = 10'000.0;  // value read by out-of-image or invalid probes
  double radius = 200.0;            // offsets are drawn from [-radius, radius]^2
};

// d(x + u/d(x)) - d(x + v/d(x)) in millimeters. The center pixel must have
// valid depth; probes outside the image or on invalid depth read
// `background_mm`.
double depth_feature(const DepthFrame& depth, int x, int y, const OffsetPair& pair,
                     double background_mm);

using ClassDistribution = std::array<double, kNumClasses>;

struct TreeNode {
  OffsetPair pair;
  float threshold = 0;        // go left when feature < threshold
  std::int32_t left = -1;     // -1 marks a leaf
  std::int32_t right = -1;
  ClassDistribution distribution{};  // leaves only; sums to 1
  bool is_leaf() const noexcept { return left < 0; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  int depth() const;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  FeatureConfig features;
  std::string metadata;  // free-form JSON written by the trainer

  void validate(int max_depth = 64) const;
};

struct ForestTrainConfig {
  int trees = 3;
  int max_depth = 22;
  int pixels_per_class_per_image = 64;
  int candidates_per_node = 100;
  int thresholds_per_candidate = 20;
  int min_samples = 16;
  bool bootstrap = true;
  FeatureConfig features;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct LabeledDepth {
  DepthFrame depth;
  LabelMask labels;
};

// Shannon entropy (bits) of a class histogram.
double entropy_bits(const std::array<double, kNumClasses>& counts);
// Parent entropy minus the size-weighted child entropies.
double information_gain(const std::array<double, kNumClasses>& parent,
                        const std::array<double, kNumClasses>& left,
                        const std::array<double, kNumClasses>& right);

// Throws kMissingClass when a class has no valid-depth training pixel.
ForestModel train_forest(std::span<const LabeledDepth> frames, const ForestTrainConfig& config);

struct ForestPrediction {
  LabelMask labels;
  // Per-pixel averaged distribution, row-major, 3 values per pixel; only
  // filled when requested.
  std::vector<float> probabilities;
};

// Averages leaf distributions over trees and takes the argmax (lowest label
// on ties). Invalid-depth pixels are background.
ForestPrediction predict_mask(const ForestModel& model, const DepthFrame& depth,
                              bool with_probabilities = false);

// Versioned little-endian container starting with the magic "GSRF".
std::vector<std::uint8_t> serialize_forest(const ForestModel& model);
ForestModel deserialize_forest(std::span<const std::uint8_t> bytes);
void save_forest(const ForestModel& model, const std::filesystem::path& path);
ForestModel load_forest(const std::filesystem::path& path);

}  // namespace handseg
