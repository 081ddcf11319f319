#include "handseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <cstdio>
#include <random>

#include "handseg/parallel.hpp"
#include "handseg/pipeline.hpp"

namespace handseg {

double Ellipse::radius2(double x, double y) const noexcept {
  const double c = std::cos(angle), s = std::sin(angle);
  const double dx = x - cx, dy = y - cy;
  const double u = (c * dx + s * dy) / rx;
  const double v = (-s * dx + c * dy) / ry;
  return u * u + v * v;
}

bool hand_covers(const SynthHand& hand, int x, int y) noexcept {
  if (!hand.present) return false;
  return hand.palm.radius2(x, y) <= 1.0 || hand.thumb.radius2(x, y) <= 1.0;
}

namespace {

std::uint8_t clamp8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

SynthHand make_hand(std::mt19937_64& rng, int w, int h, bool left) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto uni = [&](double a, double b) { return a + (b - a) * unit(rng); };
  const double scale = std::min(w / 320.0, h / 240.0);
  SynthHand hand;
  hand.present = true;
  const double cx = left ? uni(0.20, 0.40) * w : uni(0.60, 0.80) * w;
  const double cy = uni(0.35, 0.62) * h;
  const double angle = uni(-0.35, 0.35);
  hand.palm = {cx, cy, uni(26, 34) * scale, uni(34, 44) * scale, angle};
  // Thumb sticks out toward the body's midline: right side of the image for
  // the left hand, and vice versa.
  const double side = left ? 1.0 : -1.0;
  const double c = std::cos(angle), s = std::sin(angle);
  const double ox = side * 0.95 * hand.palm.rx, oy = 0.15 * hand.palm.ry;
  hand.thumb = {cx + c * ox - s * oy, cy + s * ox + c * oy, uni(9, 12) * scale,
                uni(18, 24) * scale, angle - side * 0.6};
  hand.depth_mm = uni(450, 650);
  return hand;
}

// Depth and shading of a hand at (x, y); returns false if not covered.
bool hand_surface(const SynthHand& hand, int x, int y, double& z, double& shade) {
  const double rp = hand.palm.radius2(x, y);
  const double rt = hand.thumb.radius2(x, y);
  if (rp > 1.0 && rt > 1.0) return false;
  z = 1e9;
  shade = 0;
  if (rp <= 1.0) {
    const double bulge = std::sqrt(1.0 - rp);
    z = hand.depth_mm + 25.0 * (1.0 - bulge);
    shade = 0.82 + 0.18 * bulge;
  }
  if (rt <= 1.0) {
    const double bulge = std::sqrt(1.0 - rt);
    const double zt = hand.depth_mm + 8.0 + 12.0 * (1.0 - bulge);
    if (zt < z) {
      z = zt;
      shade = 0.82 + 0.18 * bulge;
    }
  }
  return true;
}

}  // namespace

SynthScene synth_scene(std::uint64_t seed, const SynthParams& params) {
  const int w = params.width, h = params.height;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto uni = [&](double a, double b) { return a + (b - a) * unit(rng); };

  SynthScene scene;
  scene.depth = DepthFrame(w, h, 0);
  scene.color = ColorFrame(w, h, Rgb{});
  scene.labels = LabelMask(w, h, Label::kBackground);

  // wall: plane through ~1050 mm with a gentle tilt
  const double wall_z = uni(1000, 1100);
  const double gx = uni(-0.15, 0.15) * 640.0 / w;
  const double gy = uni(-0.10, 0.10) * 480.0 / h;
  const double gray = uni(80, 100);
  std::array<double, 3> tint{uni(-3, 3), uni(-3, 3), uni(-3, 3)};
  const double fx = uni(2, 5) * 2 * std::numbers::pi / w;
  const double fy = uni(2, 5) * 2 * std::numbers::pi / h;
  const double phase = uni(0, 2 * std::numbers::pi);

  // torso: wide ellipse rising from the bottom edge
  Ellipse torso{uni(0.4, 0.6) * w, 1.05 * h, uni(0.22, 0.3) * w, uni(0.45, 0.55) * h, 0};
  const double torso_z = uni(780, 850);
  const std::array<double, 3> torso_rgb{uni(100, 125), uni(100, 125), uni(110, 135)};

  if (params.left_hand) scene.hands[0] = make_hand(rng, w, h, true);
  if (params.right_hand) scene.hands[1] = make_hand(rng, w, h, false);

  const std::array<Rgb, 2> glove{hsv_to_rgb(params.left_glove), hsv_to_rgb(params.right_glove)};

  std::normal_distribution<double> cnoise(0.0, 1.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double z = wall_z + gx * (x - w / 2.0) + gy * (y - h / 2.0);
      const double tex = 12.0 * std::sin(fx * x + phase) * std::cos(fy * y);
      std::array<double, 3> rgb{gray + tex + tint[0], gray + tex + tint[1], gray + tex + tint[2]};
      Label label = Label::kBackground;
      if (torso.radius2(x, y) <= 1.0) {
        z = torso_z;
        rgb = torso_rgb;
      }
      for (int k = 0; k < 2; ++k) {
        double hz, shade;
        if (scene.hands[k].present && hand_surface(scene.hands[k], x, y, hz, shade) && hz < z) {
          z = hz;
          const Rgb g = glove[k];
          rgb = {g.r * shade, g.g * shade, g.b * shade};
          label = k == 0 ? Label::kLeft : Label::kRight;
        }
      }
      scene.labels(x, y) = label;
      Rgb& px = scene.color(x, y);
      // draw noise unconditionally so the stream does not depend on params
      const double n0 = cnoise(rng), n1 = cnoise(rng), n2 = cnoise(rng);
      const double nz = cnoise(rng);
      const double drop = unit(rng);
      px.r = clamp8(rgb[0] + params.color_noise * n0);
      px.g = clamp8(rgb[1] + params.color_noise * n1);
      px.b = clamp8(rgb[2] + params.color_noise * n2);
      const double zmm = drop < params.dropout ? 0.0 : z + params.depth_noise * nz;
      scene.depth(x, y) = static_cast<std::uint16_t>(std::clamp(std::lround(zmm), 0L, 65535L));
    }
  }
  return scene;
}

SequenceManifest write_synth_sequence(const std::filesystem::path& dir, std::uint64_t seed,
                                      int count, const SynthParams& params,
                                      const std::string& sequence_id, int jobs) {
  if (count < 0) throw Error(ErrorCode::kInvalidParameter, "count must be >= 0");
  namespace fs = std::filesystem;
  for (const char* sub : {"depth", "color", "gt"}) fs::create_directories(dir / sub);
  SequenceManifest m;
  m.sequence_id = sequence_id;
  m.subject_id = "synthetic";
  m.camera = "synth";
  m.base_dir = dir;
  m.frames.resize(count);
  parallel_for(static_cast<std::size_t>(count), jobs, [&](std::size_t i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.png", i);
    const SynthScene scene = synth_scene(frame_seed(seed, static_cast<int>(i)), params);
    FrameEntry& e = m.frames[i];
    e.index = static_cast<int>(i);
    e.depth = std::string("depth/") + name;
    e.color = std::string("color/") + name;
    e.label = std::string("gt/") + name;
    write_depth_png(scene.depth, dir / e.depth);
    write_color_png(scene.color, dir / e.color);
    save_label(scene.labels, dir / *e.label);
  });
  save_manifest(m, dir / "manifest.json");
  return m;
}

}  // namespace handseg
