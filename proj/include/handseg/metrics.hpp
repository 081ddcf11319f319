#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "handseg/image.hpp"

namespace handseg {

// Rows are ground truth, columns prediction.
class ConfusionMatrix {
 public:
  using Counts = std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses>;

  void accumulate(const LabelMask& gt, const LabelMask& pred);
  void merge(const ConfusionMatrix& other);

  std::uint64_t at(int gt, int pred) const { return counts_[gt][pred]; }
  std::uint64_t& at(int gt, int pred) { return counts_[gt][pred]; }
  std::uint64_t total() const;
  const Counts& counts() const noexcept { return counts_; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  Counts counts_{};
};

struct EvalReport {
  std::array<double, kNumClasses> iou{};
  // Classes with TP+FP+FN > 0; only these enter the mean.
  std::array<bool, kNumClasses> counted{};
  double miou = 0.0;
  std::uint64_t pixels = 0;
  ConfusionMatrix confusion;
};

// IoU = TP / (TP + FP + FN) per class, mIoU over counted classes. Throws
// kEmptyInput for an all-zero matrix.
EvalReport iou_report(const ConfusionMatrix& cm);

std::string report_to_json(const EvalReport& report);
std::string report_to_table(const EvalReport& report);

const char* class_name(int c);

// Accumulates one confusion matrix over every *.png label in `gt_dir`
// against the same file name in `pred_dir` (kMissingFile if absent).
ConfusionMatrix accumulate_directories(const std::filesystem::path& gt_dir,
                                       const std::filesystem::path& pred_dir);

}  // namespace handseg
