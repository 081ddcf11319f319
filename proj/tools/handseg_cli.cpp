// handseg command line: annotate | review | filter | train-rf | predict | eval | augment | synth
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "handseg/augment.hpp"
#include "handseg/forest.hpp"
#include "handseg/io.hpp"
#include "handseg/metrics.hpp"
#include "handseg/parallel.hpp"
#include "handseg/pipeline.hpp"
#include "handseg/review.hpp"
#include "handseg/review_server.hpp"
#include "handseg/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace handseg;

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;
constexpr int kExitPartial = 3;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

// The config file holds the pipeline settings plus an optional "forest"
// section for train-rf.
struct LoadedConfig {
  PipelineConfig pipeline;
  json forest = json::object();
};

LoadedConfig load_all_config(const Common& common) {
  LoadedConfig out;
  if (!common.config_path.empty()) {
    if (!fs::exists(common.config_path)) {
      throw Error(ErrorCode::kMissingFile, "config not found: " + common.config_path);
    }
    json doc;
    try {
      doc = json::parse(read_text_file(common.config_path));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kConfig, std::string("malformed config: ") + e.what());
    }
    if (doc.is_object() && doc.contains("forest")) {
      out.forest = doc["forest"];
      doc.erase("forest");
    }
    out.pipeline = config_from_json_text(doc.dump());
  }
  if (common.seed) out.pipeline.seed = *common.seed;
  return out;
}

std::string frame_file(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.png", index);
  return buf;
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

// ---------------------------------------------------------------- annotate

struct AnnotateArgs {
  std::string manifest;
  std::string out;
  bool force = false;
  bool stages = false;
  std::optional<double> blur_sigma;
  std::optional<double> svm_c;
  std::optional<double> gamma;
  std::optional<int> iterations;
};

int run_annotate(const Common& common, const AnnotateArgs& a) {
  PipelineConfig cfg = load_all_config(common).pipeline;
  if (a.blur_sigma) cfg.blur_sigma = *a.blur_sigma;
  if (a.svm_c) cfg.svm_c = *a.svm_c;
  if (a.gamma) cfg.grabcut.gamma = *a.gamma;
  if (a.iterations) cfg.grabcut.iterations = *a.iterations;
  cfg.validate();
  const SequenceManifest m = load_manifest(a.manifest, FileCheck::kLenient);
  AnnotateOptions opt;
  opt.output_dir = a.out;
  opt.jobs = common.jobs;
  opt.force = a.force;
  opt.write_stages = a.stages;
  const AnnotateSummary s = annotate_sequence(m, cfg, opt);
  print_json({{"status", s.failed == 0 ? "ok" : "partial"},
              {"sequence_id", m.sequence_id},
              {"annotated", s.annotated},
              {"kept_existing", s.kept_existing},
              {"failed", s.failed},
              {"manifest", s.manifest_path.string()},
              {"diagnostics", s.diagnostics_path.string()}});
  return s.failed == 0 ? 0 : kExitPartial;
}

// ------------------------------------------------------------------ review

struct ReviewArgs {
  std::vector<std::string> manifests;
  std::string decisions;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string ui_dir;
};

ReviewServer* g_server = nullptr;

int run_review(const ReviewArgs& a) {
  ReviewServerOptions opt;
  for (const auto& m : a.manifests) opt.manifests.emplace_back(m);
  opt.decisions = a.decisions;
  opt.host = a.host;
  opt.port = a.port;
  opt.ui_dir = a.ui_dir;
  ReviewServer server(opt);
  const int port = server.bind();
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  std::cout << json{{"status", "listening"}, {"host", a.host}, {"port", port}}.dump() << std::endl;
  server.run();
  g_server = nullptr;
  return 0;
}

// ------------------------------------------------------------------ filter

struct FilterArgs {
  std::string manifest;
  std::string decisions;
  std::string out;
};

int run_filter(const FilterArgs& a) {
  const SequenceManifest m = load_manifest(a.manifest, FileCheck::kLenient);
  const auto decisions = load_decisions(a.decisions);
  SequenceManifest filtered = filter_dataset(m, decisions);
  const fs::path out = a.out;
  fs::path base = out.parent_path();
  if (base.empty()) base = ".";
  save_manifest(rebase_manifest(filtered, base), out);
  print_json({{"status", "ok"},
              {"sequence_id", m.sequence_id},
              {"input_frames", m.frames.size()},
              {"kept", filtered.frames.size()},
              {"removed", m.frames.size() - filtered.frames.size()},
              {"manifest", out.string()}});
  return 0;
}

// ---------------------------------------------------------------- train-rf

struct TrainArgs {
  std::vector<std::string> manifests;
  std::string out;
  std::optional<int> trees, max_depth, pixels, candidates, thresholds, min_samples;
  std::optional<double> radius;
  bool no_bootstrap = false;
};

std::vector<LabeledDepth> load_labeled(const std::vector<std::string>& manifests, int jobs) {
  std::vector<std::pair<const SequenceManifest*, const FrameEntry*>> todo;
  std::vector<SequenceManifest> loaded;
  loaded.reserve(manifests.size());
  for (const auto& p : manifests) loaded.push_back(load_manifest(p, FileCheck::kStrict));
  for (const auto& m : loaded) {
    for (const auto& f : m.frames) {
      if (!f.label) {
        throw Error(ErrorCode::kMalformedManifest,
                    "frame " + std::to_string(f.index) + " of " + m.sequence_id + " has no label");
      }
      todo.emplace_back(&m, &f);
    }
  }
  std::vector<LabeledDepth> out(todo.size());
  parallel_for(todo.size(), jobs, [&](std::size_t i) {
    const auto& [m, f] = todo[i];
    out[i].depth = read_depth_png(m->resolve(f->depth));
    out[i].labels = load_label(m->resolve(*f->label));
    if (!out[i].depth.same_shape(out[i].labels)) {
      throw Error(ErrorCode::kDimensionMismatch, "depth and label differ in size");
    }
  });
  return out;
}

int run_train(const Common& common, const TrainArgs& a) {
  const LoadedConfig lc = load_all_config(common);
  ForestTrainConfig cfg;
  const json& fj = lc.forest;
  cfg.trees = fj.value("trees", cfg.trees);
  cfg.max_depth = fj.value("max_depth", cfg.max_depth);
  cfg.pixels_per_class_per_image = fj.value("pixels_per_class_per_image", cfg.pixels_per_class_per_image);
  cfg.candidates_per_node = fj.value("candidates_per_node", cfg.candidates_per_node);
  cfg.thresholds_per_candidate = fj.value("thresholds_per_candidate", cfg.thresholds_per_candidate);
  cfg.min_samples = fj.value("min_samples", cfg.min_samples);
  cfg.bootstrap = fj.value("bootstrap", cfg.bootstrap);
  std::optional<double> radius;
  if (fj.contains("radius")) radius = fj["radius"].get<double>();
  if (a.trees) cfg.trees = *a.trees;
  if (a.max_depth) cfg.max_depth = *a.max_depth;
  if (a.pixels) cfg.pixels_per_class_per_image = *a.pixels;
  if (a.candidates) cfg.candidates_per_node = *a.candidates;
  if (a.thresholds) cfg.thresholds_per_candidate = *a.thresholds;
  if (a.min_samples) cfg.min_samples = *a.min_samples;
  if (a.radius) radius = a.radius;
  if (a.no_bootstrap) cfg.bootstrap = false;
  cfg.seed = lc.pipeline.seed;
  cfg.jobs = common.jobs;

  const auto frames = load_labeled(a.manifests, common.jobs);
  if (frames.empty()) throw Error(ErrorCode::kEmptyInput, "no training frames");
  // 200 px*m is the radius at 640 px width; scale it with the frame.
  cfg.features.radius = radius ? *radius : 200.0 * frames.front().depth.width() / 640.0;
  const ForestModel model = train_forest(frames, cfg);
  save_forest(model, a.out);
  std::vector<int> depths;
  for (const auto& t : model.trees) depths.push_back(t.depth());
  print_json({{"status", "ok"},
              {"model", a.out},
              {"frames", frames.size()},
              {"trees", model.trees.size()},
              {"tree_depths", depths},
              {"radius", cfg.features.radius}});
  return 0;
}

// ----------------------------------------------------------------- predict

struct PredictArgs {
  std::string model;
  std::string manifest;
  std::string out;
};

int run_predict(const Common& common, const PredictArgs& a) {
  const ForestModel model = load_forest(a.model);
  const SequenceManifest m = load_manifest(a.manifest, FileCheck::kStrict);
  fs::create_directories(a.out);
  parallel_for(m.frames.size(), common.jobs, [&](std::size_t i) {
    const FrameEntry& f = m.frames[i];
    const DepthFrame depth = read_depth_png(m.resolve(f.depth));
    save_label(predict_mask(model, depth).labels, fs::path(a.out) / frame_file(f.index));
  });
  print_json({{"status", "ok"}, {"frames", m.frames.size()}, {"out", a.out}});
  return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string gt;
  std::string pred;
  std::string json_out;
  std::string format = "table";
};

int run_eval(const EvalArgs& a) {
  const EvalReport r = iou_report(accumulate_directories(a.gt, a.pred));
  const std::string text = report_to_json(r);
  if (!a.json_out.empty()) write_file_atomic(a.json_out, text + "\n");
  if (a.format == "json") {
    std::cout << text << "\n";
  } else {
    std::cout << report_to_table(r);
  }
  return 0;
}

// ----------------------------------------------------------------- augment

struct AugmentArgs {
  std::string manifest;
  std::string out;
  int copies = 1;
};

int run_augment(const Common& common, const AugmentArgs& a) {
  const std::uint64_t seed = common.seed.value_or(load_all_config(common).pipeline.seed);
  const SequenceManifest m = load_manifest(a.manifest, FileCheck::kStrict);
  if (a.copies < 1) throw Error(ErrorCode::kInvalidParameter, "copies must be >= 1");
  const fs::path out = a.out;
  for (const char* sub : {"depth", "color", "gt"}) fs::create_directories(out / sub);
  SequenceManifest result;
  result.sequence_id = m.sequence_id + "_aug";
  result.subject_id = m.subject_id;
  result.camera = m.camera;
  result.base_dir = out;
  result.frames.resize(m.frames.size() * a.copies);
  std::vector<json> specs(result.frames.size());
  parallel_for(result.frames.size(), common.jobs, [&](std::size_t k) {
    const FrameEntry& src = m.frames[k / a.copies];
    if (!src.label) throw Error(ErrorCode::kMalformedManifest, "augment needs labeled frames");
    const int index = static_cast<int>(k);
    std::mt19937_64 rng(frame_seed(seed, index));
    const AugmentSpec spec = sample_augment(rng);
    const FramePair pair = load_frame_pair(m, src);
    const auto [depth, mask] = augment(pair.depth, load_label(m.resolve(*src.label)), spec);
    FrameEntry& e = result.frames[k];
    e.index = index;
    e.depth = "depth/" + frame_file(index);
    e.color = "color/" + frame_file(index);
    e.label = "gt/" + frame_file(index);
    write_depth_png(depth, out / e.depth);
    write_color_png(augment_color(pair.color, spec), out / e.color);
    save_label(mask, out / *e.label);
    specs[k] = {{"index", index}, {"source", src.index}, {"flip", spec.flip},
                {"translate_x", spec.translate_x}, {"translate_y", spec.translate_y},
                {"scale", spec.scale}};
  });
  save_manifest(result, out / "manifest.json");
  write_file_atomic(out / "augment_specs.json", json(specs).dump(2) + "\n");
  print_json({{"status", "ok"}, {"frames", result.frames.size()}, {"out", a.out}});
  return 0;
}

// ------------------------------------------------------------------- synth

struct SynthArgs {
  std::string out;
  int count = 10;
  SynthParams params;
  std::string sequence_id = "synth";
};

int run_synth(const Common& common, const SynthArgs& a) {
  const std::uint64_t seed = common.seed.value_or(load_all_config(common).pipeline.seed);
  const SequenceManifest m =
      write_synth_sequence(a.out, seed, a.count, a.params, a.sequence_id, common.jobs);
  print_json({{"status", "ok"}, {"frames", m.frames.size()},
              {"manifest", (fs::path(a.out) / "manifest.json").string()}});
  return 0;
}

int fail(const char* code, const std::string& message, int exit_code) {
  std::cerr << json{{"status", "error"}, {"code", code}, {"message", message}}.dump() << std::endl;
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Glove-based hand segmentation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--config", common.config_path, "JSON config file")
      ->envname("HANDSEG_CONFIG");
  app.add_option("--seed", common.seed, "Random seed (overrides the config)")
      ->envname("HANDSEG_SEED");
  app.add_option("--jobs", common.jobs, "Worker threads")
      ->envname("HANDSEG_JOBS")
      ->check(CLI::PositiveNumber);

  AnnotateArgs an;
  auto* annotate = app.add_subcommand("annotate", "Label a sequence with the three-stage pipeline");
  annotate->add_option("--manifest", an.manifest, "Sequence manifest")->required();
  annotate->add_option("--out", an.out, "Label output directory (default <seq>/annot)");
  annotate->add_flag("--force", an.force, "Overwrite existing label files");
  annotate->add_flag("--stages", an.stages, "Also write stage-1/2 masks");
  annotate->add_option("--blur-sigma", an.blur_sigma, "Blur sigma at the reference size");
  annotate->add_option("--svm-c", an.svm_c, "SVM C");
  annotate->add_option("--gamma", an.gamma, "GrabCut smoothness weight");
  annotate->add_option("--iterations", an.iterations, "GrabCut iterations");

  ReviewArgs rv;
  auto* review = app.add_subcommand("review", "Serve the review API and UI");
  review->add_option("--manifest", rv.manifests, "Labeled manifest (repeatable)")->required();
  review->add_option("--decisions", rv.decisions, "Decisions file (JSON lines)")->required();
  review->add_option("--host", rv.host, "Bind address");
  review->add_option("--port", rv.port, "Port (0 = any free port)");
  review->add_option("--ui-dir", rv.ui_dir, "Static UI assets served at /");

  FilterArgs fl;
  auto* filter = app.add_subcommand("filter", "Drop frames covered by reject decisions");
  filter->add_option("--manifest", fl.manifest, "Input manifest")->required();
  filter->add_option("--decisions", fl.decisions, "Decisions file")->required();
  filter->add_option("--out", fl.out, "Filtered manifest path")->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train-rf", "Train the depth random forest");
  train->add_option("--manifest", tr.manifests, "Labeled manifest (repeatable)")->required();
  train->add_option("--out", tr.out, "Model file (.gsrf)")->required();
  train->add_option("--trees", tr.trees);
  train->add_option("--max-depth", tr.max_depth);
  train->add_option("--pixels-per-class", tr.pixels);
  train->add_option("--candidates", tr.candidates);
  train->add_option("--thresholds", tr.thresholds);
  train->add_option("--min-samples", tr.min_samples);
  train->add_option("--radius", tr.radius, "Offset radius in px*m (default 200*W/640)");
  train->add_flag("--no-bootstrap", tr.no_bootstrap);

  PredictArgs pr;
  auto* predict = app.add_subcommand("predict", "Segment depth frames with a trained forest");
  predict->add_option("--model", pr.model)->required();
  predict->add_option("--manifest", pr.manifest)->required();
  predict->add_option("--out", pr.out, "Output label directory")->required();

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "IoU / mIoU of prediction labels against ground truth");
  eval->add_option("--gt", ev.gt, "Ground-truth label directory")->required();
  eval->add_option("--pred", ev.pred, "Predicted label directory")->required();
  eval->add_option("--json", ev.json_out, "Also write the JSON report here");
  eval->add_option("--format", ev.format)->check(CLI::IsMember({"table", "json"}));

  AugmentArgs ag;
  auto* aug = app.add_subcommand("augment", "Write randomly flipped/shifted/scaled copies");
  aug->add_option("--manifest", ag.manifest)->required();
  aug->add_option("--out", ag.out)->required();
  aug->add_option("--copies", ag.copies, "Augmented copies per frame");

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic RGBD sequence with ground truth");
  synth->add_option("--out", sy.out)->required();
  synth->add_option("--count", sy.count);
  synth->add_option("--width", sy.params.width);
  synth->add_option("--height", sy.params.height);
  synth->add_option("--color-noise", sy.params.color_noise);
  synth->add_option("--depth-noise", sy.params.depth_noise);
  synth->add_option("--dropout", sy.params.dropout);
  synth->add_option("--sequence-id", sy.sequence_id);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), kExitUsage);
  }

  try {
    if (*annotate) return run_annotate(common, an);
    if (*review) return run_review(rv);
    if (*filter) return run_filter(fl);
    if (*train) return run_train(common, tr);
    if (*predict) return run_predict(common, pr);
    if (*eval) return run_eval(ev);
    if (*aug) return run_augment(common, ag);
    if (*synth) return run_synth(common, sy);
  } catch (const Error& e) {
    const bool usage = e.code() == ErrorCode::kConfig;
    return fail(to_string(e.code()), e.what(), usage ? kExitUsage : kExitError);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), kExitError);
  }
  return kExitError;
}
