#pragma once

#include <cstdint>
#include <vector>

#include "handseg/colorseg.hpp"
#include "handseg/gmm.hpp"
#include "handseg/image.hpp"
#include "handseg/maxflow.hpp"

namespace handseg {

enum class TrimapState : std::uint8_t { kBackground = 0, kForeground = 1, kUnknown = 2 };
using Trimap = Raster<TrimapState>;

struct GrabCutConfig {
  int components = 5;
  double gamma = 50.0;
  int iterations = 5;
  double regularization = 1.0;
  int init_em_iterations = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

// Sure-foreground = rough pixels inside the rect, unknown = other rect
// pixels, sure-background = everything outside the rect.
Trimap make_trimap(const BinaryMask& rough, const SeedRect& rect);

// 1 / (2 * mean squared color difference over 8-neighbor pairs); 0 for a
// constant image.
double contrast_beta(const ColorFrame& frame);

// Pixel graph for one binary GrabCut problem. Node index = y*width + x. The
// sink side is foreground: unknown pixels get source capacity = foreground
// cost and sink capacity = background cost (shifted so the smaller is 0);
// sure pixels get a single hard link to their own terminal.
struct GrabCutNetwork {
  FlowNetwork network;
  double hard_capacity = 0.0;
};

GrabCutNetwork build_network(const ColorFrame& frame, const Trimap& trimap,
                             const GmmModel& foreground, const GmmModel& background,
                             const GrabCutConfig& config, double beta);

// Smoothness weight between two 8-neighbors.
double nlink_weight(Rgb a, Rgb b, double gamma, double beta, bool diagonal);

// -log of the best weighted component density.
double data_cost(const GmmModel& model, Rgb color);

// Data cost over unknown pixels plus smoothness over label changes.
double grabcut_energy(const ColorFrame& frame, const Trimap& trimap, const BinaryMask& labeling,
                      const GmmModel& foreground, const GmmModel& background,
                      const GrabCutConfig& config, double beta);

struct GrabCutResult {
  BinaryMask mask;
  GmmModel foreground;
  GmmModel background;
  // Energy of the initial labeling, then after every cut.
  std::vector<double> energy;
  int iterations = 0;
  bool converged = false;
  // Set when seeding left no sure-foreground (or no background) pixels and
  // the rough mask was returned unchanged.
  bool degenerate_seed = false;
};

GrabCutResult grabcut_refine(const ColorFrame& frame, const BinaryMask& rough,
                             const SeedRect& rect, const GrabCutConfig& config);

// Resolves pixels claimed by both hands in favour of the higher foreground
// log-likelihood (ties go to the left hand).
void resolve_overlap(const ColorFrame& frame, BinaryMask& left, BinaryMask& right,
                     const GmmModel& left_model, const GmmModel& right_model);

}  // namespace handseg
