#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "handseg/color.hpp"
#include "handseg/image.hpp"
#include "handseg/io.hpp"

namespace handseg {

// Rotated ellipse in pixel coordinates.
struct Ellipse {
  double cx = 0, cy = 0;
  double rx = 1, ry = 1;
  double angle = 0;  // radians

  // Squared normalized radius; <= 1 inside.
  double radius2(double x, double y) const noexcept;
};

struct SynthHand {
  bool present = false;
  Ellipse palm;
  Ellipse thumb;
  double depth_mm = 500;  // depth at the palm's nearest point
};

struct SynthParams {
  int width = 320;
  int height = 240;
  double color_noise = 4.0;  // per-channel gaussian sigma, 8-bit units
  double depth_noise = 2.0;  // mm
  double dropout = 0.0;      // fraction of depth pixels zeroed
  bool left_hand = true;
  bool right_hand = true;
  // Glove colors. Saturations are picked so the blurred threshold boundary
  // lands close to the glove edge against the gray backdrop.
  HsvPixel left_glove{9, 245, 215};
  HsvPixel right_glove{45, 62, 205};
};

struct SynthScene {
  DepthFrame depth;
  ColorFrame color;
  LabelMask labels;
  std::array<SynthHand, 2> hands;  // [0] left, [1] right
};

// Tilted textured wall, a low-saturation torso, and up to two gloved hands
// (palm + thumb ellipsoids, left palm in the left half of the image).
// Deterministic for a given (seed, params).
SynthScene synth_scene(std::uint64_t seed, const SynthParams& params = {});

// True iff (x, y) (pixel center) lies on the rendered support of the hand.
bool hand_covers(const SynthHand& hand, int x, int y) noexcept;

// Writes `count` scenes as a sequence under `dir`: depth/, color/, gt/ PNGs
// named NNNNNN.png and manifest.json whose label entries point at gt/. Scene i
// uses frame_seed(seed, i), so the output does not depend on `jobs`.
SequenceManifest write_synth_sequence(const std::filesystem::path& dir, std::uint64_t seed,
                                      int count, const SynthParams& params,
                                      const std::string& sequence_id, int jobs = 1);

}  // namespace handseg
