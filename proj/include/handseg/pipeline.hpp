#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "handseg/colorseg.hpp"
#include "handseg/grabcut.hpp"
#include "handseg/io.hpp"
#include "handseg/svm.hpp"

namespace handseg {

// Every field has a default; a JSON config file only needs the keys it
// changes. Blur sigma and minimum component area are given at the reference
// resolution and scaled to the frame size when `scale_to_frame` is set.
struct PipelineConfig {
  HsvRange left = kDefaultLeftRange;
  HsvRange right = kDefaultRightRange;
  double blur_sigma = 30.0;
  int min_component_area = kDefaultMinComponentArea;
  int reference_width = 640;
  int reference_height = 480;
  bool scale_to_frame = true;
  GrabCutConfig grabcut;
  double svm_c = kDefaultSvmC;
  double svm_tolerance = 1e-9;
  long long svm_max_iterations = 200;
  int svm_max_samples = 50'000;
  std::uint64_t seed = 0;

  void validate() const;
  double sigma_for(int width) const;
  int min_area_for(int width, int height) const;
};

std::string config_to_json_text(const PipelineConfig& config);
// Throws kConfig on malformed JSON, unknown keys or out-of-range values.
PipelineConfig config_from_json_text(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

struct HandDiagnostics {
  int rough_pixels = 0;
  std::optional<SeedRect> rect;
  int grabcut_iterations = 0;
  bool grabcut_converged = false;
  bool degenerate_seed = false;
  int grabcut_pixels = 0;
  bool svm_trained = false;
  int final_pixels = 0;
};

struct FrameAnnotation {
  LabelMask stage1;  // thresholding + component cleanup
  LabelMask stage2;  // GrabCut with overlap resolution
  LabelMask stage3;  // SVM refinement; the final label
  HandDiagnostics left;
  HandDiagnostics right;
  bool no_glove_pixels = false;
};

FrameAnnotation annotate_frame(const ColorFrame& color, const PipelineConfig& config,
                               std::uint64_t frame_seed);

// Seed used for one frame, derived from the config seed and the frame index so
// results do not depend on scheduling.
std::uint64_t frame_seed(std::uint64_t seed, int index);

struct AnnotateOptions {
  std::filesystem::path output_dir;  // default: <manifest dir>/annot
  int jobs = 1;
  bool force = false;
  bool write_stages = false;
};

struct AnnotateSummary {
  SequenceManifest labeled;  // frames that have a label afterwards
  int annotated = 0;
  int kept_existing = 0;
  int failed = 0;
  std::filesystem::path manifest_path;
  std::filesystem::path diagnostics_path;
};

// Runs the three stages on every frame with a bounded worker pool. Per-frame
// failures are logged to the diagnostics file and the frame is left out of the
// labeled manifest. Existing label files are kept unless `force` is set.
AnnotateSummary annotate_sequence(const SequenceManifest& manifest,
                                  const PipelineConfig& config,
                                  const AnnotateOptions& options);

}  // namespace handseg
