#include "handseg/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "handseg/io.hpp"

namespace handseg {

const char* class_name(int c) {
  switch (c) {
    case 0: return "background";
    case 1: return "left";
    case 2: return "right";
  }
  return "unknown";
}

void ConfusionMatrix::accumulate(const LabelMask& gt, const LabelMask& pred) {
  if (!gt.same_shape(pred)) {
    throw Error(ErrorCode::kDimensionMismatch, "ground truth and prediction differ in size");
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    ++counts_[static_cast<int>(gt[i])][static_cast<int>(pred[i])];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  for (int g = 0; g < kNumClasses; ++g) {
    for (int p = 0; p < kNumClasses; ++p) counts_[g][p] += other.counts_[g][p];
  }
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts_) {
    for (auto v : row) t += v;
  }
  return t;
}

EvalReport iou_report(const ConfusionMatrix& cm) {
  EvalReport report;
  report.confusion = cm;
  report.pixels = cm.total();
  if (report.pixels == 0) throw Error(ErrorCode::kEmptyInput, "empty confusion matrix");
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    const std::uint64_t tp = cm.at(c, c);
    std::uint64_t fp = 0, fn = 0;
    for (int o = 0; o < kNumClasses; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    const std::uint64_t denom = tp + fp + fn;
    if (denom == 0) continue;
    report.counted[c] = true;
    report.iou[c] = static_cast<double>(tp) / static_cast<double>(denom);
    sum += report.iou[c];
    ++counted;
  }
  report.miou = sum / counted;
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json doc;
  for (int c = 0; c < kNumClasses; ++c) {
    doc["iou"][class_name(c)] =
        report.counted[c] ? nlohmann::json(report.iou[c]) : nlohmann::json(nullptr);
  }
  doc["miou"] = report.miou;
  doc["pixels"] = report.pixels;
  doc["confusion"] = report.confusion.counts();
  return doc.dump(2) + "\n";
}

std::string report_to_table(const EvalReport& report) {
  std::ostringstream out;
  char line[128];
  out << "class        IoU\n";
  for (int c = 0; c < kNumClasses; ++c) {
    if (report.counted[c]) {
      std::snprintf(line, sizeof line, "%-10s  %.4f\n", class_name(c), report.iou[c]);
    } else {
      std::snprintf(line, sizeof line, "%-10s  n/a\n", class_name(c));
    }
    out << line;
  }
  std::snprintf(line, sizeof line, "mIoU        %.4f  (%llu pixels)\n", report.miou,
                static_cast<unsigned long long>(report.pixels));
  out << line;
  return out.str();
}

ConfusionMatrix accumulate_directories(const std::filesystem::path& gt_dir,
                                       const std::filesystem::path& pred_dir) {
  namespace fs = std::filesystem;
  for (const auto& d : {gt_dir, pred_dir}) {
    if (!fs::is_directory(d)) throw Error(ErrorCode::kMissingFile, "not a directory: " + d.string());
  }
  std::vector<fs::path> names;
  for (const auto& entry : fs::directory_iterator(gt_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      names.push_back(entry.path().filename());
    }
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw Error(ErrorCode::kEmptyInput, "no label PNGs in " + gt_dir.string());
  ConfusionMatrix cm;
  for (const auto& name : names) {
    if (!fs::exists(pred_dir / name)) {
      throw Error(ErrorCode::kMissingFile, "prediction missing: " + (pred_dir / name).string());
    }
    cm.accumulate(load_label(gt_dir / name), load_label(pred_dir / name));
  }
  return cm;
}

}  // namespace handseg
