#include "handseg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "handseg/blur.hpp"
#include "handseg/parallel.hpp"

namespace handseg {

using json = nlohmann::ordered_json;

void PipelineConfig::validate() const {
  if (!left.valid() || !right.valid()) throw Error(ErrorCode::kConfig, "HSV range has min > max");
  if (!(blur_sigma > 0.0)) throw Error(ErrorCode::kConfig, "blur_sigma must be > 0");
  if (min_component_area < 0) throw Error(ErrorCode::kConfig, "min_component_area must be >= 0");
  if (reference_width < 1 || reference_height < 1) {
    throw Error(ErrorCode::kConfig, "reference size must be positive");
  }
  if (!(svm_c > 0.0) || !(svm_tolerance > 0.0) || svm_max_iterations < 1 || svm_max_samples < 1) {
    throw Error(ErrorCode::kConfig, "svm parameters must be positive");
  }
  try {
    grabcut.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, e.what());
  }
}

double PipelineConfig::sigma_for(int width) const {
  return scale_to_frame ? blur_sigma * width / reference_width : blur_sigma;
}

int PipelineConfig::min_area_for(int width, int height) const {
  if (!scale_to_frame) return min_component_area;
  const double f = static_cast<double>(width) * height /
                   (static_cast<double>(reference_width) * reference_height);
  return static_cast<int>(std::lround(min_component_area * f));
}

namespace {

json range_to_json(const HsvRange& r) {
  return json{{"min", {r.min.h, r.min.s, r.min.v}}, {"max", {r.max.h, r.max.s, r.max.v}}};
}

HsvPixel hsv_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::kConfig, "HSV triple expected");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const char* where) {
  if (!obj.is_object()) throw Error(ErrorCode::kConfig, std::string(where) + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!ok.contains(key)) {
      throw Error(ErrorCode::kConfig, "unknown config key '" + key + "' in " + where);
    }
  }
}

HsvRange range_from_json(const json& j, Label target) {
  check_keys(j, {"min", "max"}, "range");
  HsvRange r;
  r.min = hsv_from_json(j.at("min"));
  r.max = hsv_from_json(j.at("max"));
  r.target = target;
  return r;
}

}  // namespace

std::string config_to_json_text(const PipelineConfig& c) {
  json doc{
      {"left_range", range_to_json(c.left)},
      {"right_range", range_to_json(c.right)},
      {"blur_sigma", c.blur_sigma},
      {"min_component_area", c.min_component_area},
      {"reference_width", c.reference_width},
      {"reference_height", c.reference_height},
      {"scale_to_frame", c.scale_to_frame},
      {"grabcut",
       {{"components", c.grabcut.components},
        {"gamma", c.grabcut.gamma},
        {"iterations", c.grabcut.iterations},
        {"regularization", c.grabcut.regularization},
        {"init_em_iterations", c.grabcut.init_em_iterations}}},
      {"svm",
       {{"c", c.svm_c},
        {"tolerance", c.svm_tolerance},
        {"max_iterations", c.svm_max_iterations},
        {"max_samples_per_side", c.svm_max_samples}}},
      {"seed", c.seed},
  };
  return doc.dump(2) + "\n";
}

PipelineConfig config_from_json_text(const std::string& text) {
  PipelineConfig c;
  try {
    const json doc = json::parse(text);
    check_keys(doc,
               {"left_range", "right_range", "blur_sigma", "min_component_area",
                "reference_width", "reference_height", "scale_to_frame", "grabcut", "svm", "seed"},
               "config");
    if (doc.contains("left_range")) c.left = range_from_json(doc["left_range"], Label::kLeft);
    if (doc.contains("right_range")) c.right = range_from_json(doc["right_range"], Label::kRight);
    c.blur_sigma = doc.value("blur_sigma", c.blur_sigma);
    c.min_component_area = doc.value("min_component_area", c.min_component_area);
    c.reference_width = doc.value("reference_width", c.reference_width);
    c.reference_height = doc.value("reference_height", c.reference_height);
    c.scale_to_frame = doc.value("scale_to_frame", c.scale_to_frame);
    c.seed = doc.value("seed", c.seed);
    if (doc.contains("grabcut")) {
      const json& g = doc["grabcut"];
      check_keys(g, {"components", "gamma", "iterations", "regularization", "init_em_iterations"},
                 "grabcut");
      c.grabcut.components = g.value("components", c.grabcut.components);
      c.grabcut.gamma = g.value("gamma", c.grabcut.gamma);
      c.grabcut.iterations = g.value("iterations", c.grabcut.iterations);
      c.grabcut.regularization = g.value("regularization", c.grabcut.regularization);
      c.grabcut.init_em_iterations = g.value("init_em_iterations", c.grabcut.init_em_iterations);
    }
    if (doc.contains("svm")) {
      const json& s = doc["svm"];
      check_keys(s, {"c", "tolerance", "max_iterations", "max_samples_per_side"}, "svm");
      c.svm_c = s.value("c", c.svm_c);
      c.svm_tolerance = s.value("tolerance", c.svm_tolerance);
      c.svm_max_iterations = s.value("max_iterations", c.svm_max_iterations);
      c.svm_max_samples = s.value("max_samples_per_side", c.svm_max_samples);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kMissingFile, "config not found: " + path.string());
  }
  return config_from_json_text(read_text_file(path));
}

std::uint64_t frame_seed(std::uint64_t seed, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace {

int count_set(const BinaryMask& m) {
  return static_cast<int>(std::count_if(m.pixels().begin(), m.pixels().end(),
                                        [](std::uint8_t v) { return v != 0; }));
}

LabelMask combine(const BinaryMask& left, const BinaryMask& right) {
  LabelMask out(left.width(), left.height(), Label::kBackground);
  for (std::size_t p = 0; p < out.size(); ++p) {
    if (left[p]) {
      out[p] = Label::kLeft;
    } else if (right[p]) {
      out[p] = Label::kRight;
    }
  }
  return out;
}

}  // namespace

FrameAnnotation annotate_frame(const ColorFrame& color, const PipelineConfig& config,
                               std::uint64_t seed) {
  config.validate();
  FrameAnnotation out;
  const int w = color.width(), h = color.height();

  // stage 1: one blur shared by both hands
  const ColorFrame smoothed = gaussian_blur(color, config.sigma_for(w));
  const int min_area = config.min_area_for(w, h);
  BinaryMask rough_l =
      remove_small_components(threshold_hsv_presmoothed(smoothed, config.left), min_area);
  BinaryMask rough_r =
      remove_small_components(threshold_hsv_presmoothed(smoothed, config.right), min_area);
  out.left.rough_pixels = count_set(rough_l);
  out.right.rough_pixels = count_set(rough_r);
  out.stage1 = combine(rough_l, rough_r);
  out.no_glove_pixels = out.left.rough_pixels == 0 && out.right.rough_pixels == 0;

  // stage 2
  GrabCutConfig gc = config.grabcut;
  BinaryMask cut_l(w, h, 0), cut_r(w, h, 0);
  GmmModel model_l, model_r;
  const auto run = [&](const BinaryMask& rough, HandDiagnostics& diag, BinaryMask& cut,
                       GmmModel& model, std::uint64_t s) {
    diag.rect = seed_rect(rough);
    if (!diag.rect) return;
    gc.seed = s;
    GrabCutResult r = grabcut_refine(color, rough, *diag.rect, gc);
    diag.grabcut_iterations = r.iterations;
    diag.grabcut_converged = r.converged;
    diag.degenerate_seed = r.degenerate_seed;
    cut = std::move(r.mask);
    model = std::move(r.foreground);
  };
  run(rough_l, out.left, cut_l, model_l, seed);
  run(rough_r, out.right, cut_r, model_r, seed + 1);
  if (!model_l.components().empty() && !model_r.components().empty()) {
    resolve_overlap(color, cut_l, cut_r, model_l, model_r);
  }
  out.left.grabcut_pixels = count_set(cut_l);
  out.right.grabcut_pixels = count_set(cut_r);
  out.stage2 = combine(cut_l, cut_r);

  // stage 3
  RefineConfig rc;
  rc.svm.c = config.svm_c;
  rc.svm.tolerance = config.svm_tolerance;
  rc.svm.max_iterations = config.svm_max_iterations;
  rc.max_samples_per_side = config.svm_max_samples;
  rc.seed = seed + 2;
  const RefineResult refined = refine_labels(color, cut_l, cut_r, rc);
  out.stage3 = refined.labels;
  out.left.svm_trained = refined.left.trained;
  out.right.svm_trained = refined.right.trained;
  out.left.final_pixels = refined.left.kept_pixels;
  out.right.final_pixels = refined.right.kept_pixels;
  return out;
}

namespace {

json hand_json(const HandDiagnostics& d) {
  json j{{"rough_pixels", d.rough_pixels}};
  if (d.rect) {
    j["rect"] = {d.rect->x0, d.rect->y0, d.rect->w, d.rect->h};
  } else {
    j["rect"] = nullptr;
  }
  j["grabcut_iterations"] = d.grabcut_iterations;
  j["grabcut_converged"] = d.grabcut_converged;
  j["degenerate_seed"] = d.degenerate_seed;
  j["grabcut_pixels"] = d.grabcut_pixels;
  j["svm_trained"] = d.svm_trained;
  j["final_pixels"] = d.final_pixels;
  return j;
}

std::string frame_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.png", index);
  return buf;
}

struct FrameOutcome {
  json record;
  std::optional<std::string> label;  // relative path, set on success
  enum { kAnnotated, kKept, kFailed } status = kFailed;
};

}  // namespace

AnnotateSummary annotate_sequence(const SequenceManifest& manifest,
                                  const PipelineConfig& config,
                                  const AnnotateOptions& options) {
  config.validate();
  if (options.jobs < 1) throw Error(ErrorCode::kInvalidParameter, "jobs must be >= 1");
  namespace fs = std::filesystem;
  const fs::path out_dir =
      options.output_dir.empty() ? manifest.base_dir / "annot" : options.output_dir;
  fs::create_directories(out_dir);
  if (options.write_stages) fs::create_directories(out_dir / "stages");
  const fs::path rel_dir = fs::relative(out_dir, manifest.base_dir);

  const std::size_t n = manifest.frames.size();
  std::vector<FrameOutcome> outcomes(n);
  parallel_for(n, options.jobs, [&](std::size_t i) {
    const FrameEntry& entry = manifest.frames[i];
    FrameOutcome& o = outcomes[i];
    o.record = json{{"index", entry.index}};
    const std::string name = frame_name(entry.index);
    const fs::path target = out_dir / name;
    const std::string rel = (rel_dir / name).generic_string();
    try {
      if (!options.force && fs::exists(target)) {
        load_label(target);  // must at least be a valid label image
        o.status = FrameOutcome::kKept;
        o.label = rel;
        o.record["status"] = "kept_existing";
        o.record["label"] = rel;
        return;
      }
      const FramePair pair = load_frame_pair(manifest, entry);
      const FrameAnnotation a =
          annotate_frame(pair.color, config, frame_seed(config.seed, entry.index));
      save_label(a.stage3, target);
      if (options.write_stages) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "%06d_stage1.png", entry.index);
        save_label(a.stage1, out_dir / "stages" / buf);
        std::snprintf(buf, sizeof buf, "%06d_stage2.png", entry.index);
        save_label(a.stage2, out_dir / "stages" / buf);
      }
      o.status = FrameOutcome::kAnnotated;
      o.label = rel;
      o.record["status"] = "annotated";
      o.record["label"] = rel;
      json flags = json::array();
      if (a.no_glove_pixels) flags.push_back("no_glove_pixels");
      if (a.left.degenerate_seed || a.right.degenerate_seed) flags.push_back("degenerate_seed");
      o.record["flags"] = flags;
      o.record["left"] = hand_json(a.left);
      o.record["right"] = hand_json(a.right);
    } catch (const Error& e) {
      o.status = FrameOutcome::kFailed;
      o.record["status"] = "failed";
      o.record["error"] = {{"code", to_string(e.code())}, {"message", e.what()}};
    } catch (const std::exception& e) {
      o.status = FrameOutcome::kFailed;
      o.record["status"] = "failed";
      o.record["error"] = {{"code", "internal"}, {"message", e.what()}};
    }
  });

  AnnotateSummary summary;
  summary.labeled = manifest;
  summary.labeled.frames.clear();
  json frames = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    FrameOutcome& o = outcomes[i];
    frames.push_back(std::move(o.record));
    switch (o.status) {
      case FrameOutcome::kAnnotated: ++summary.annotated; break;
      case FrameOutcome::kKept: ++summary.kept_existing; break;
      case FrameOutcome::kFailed: ++summary.failed; break;
    }
    if (o.label) {
      FrameEntry e = manifest.frames[i];
      e.label = *o.label;
      summary.labeled.frames.push_back(std::move(e));
    }
  }
  summary.manifest_path = manifest.base_dir / "annotated.json";
  summary.diagnostics_path = manifest.base_dir / "annotate_diagnostics.json";
  save_manifest(summary.labeled, summary.manifest_path);

  json diag{{"sequence_id", manifest.sequence_id},
            {"config", json::parse(config_to_json_text(config))},
            {"annotated", summary.annotated},
            {"kept_existing", summary.kept_existing},
            {"failed", summary.failed},
            {"frames", std::move(frames)}};
  write_file_atomic(summary.diagnostics_path, diag.dump(2) + "\n");
  return summary;
}

}  // namespace handseg
