#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "handseg/io.hpp"

namespace handseg {

enum class Verdict { kAccept, kReject };

// A reviewer's verdict over the inclusive frame-index range [start, end].
struct ReviewDecision {
  std::string sequence_id;
  int start = 0;
  int end = 0;
  Verdict verdict = Verdict::kReject;
  std::string reviewer;
  std::string timestamp;  // ISO 8601, UTC

  friend bool operator==(const ReviewDecision&, const ReviewDecision&) = default;
};

std::string decision_to_json_line(const ReviewDecision& decision);
// Throws kConfig on malformed input (missing fields, bad verdict, start > end).
ReviewDecision decision_from_json_text(const std::string& text);

// Reads a JSON-lines decisions file; a missing file is an empty list.
std::vector<ReviewDecision> load_decisions(const std::filesystem::path& path);

std::string utc_timestamp_now();

// Append-only decisions log. One process-wide writer per path serializes
// appends; each line is flushed and fsync'ed before append() returns.
class DecisionLog {
 public:
  // Throws kIo if the file cannot be opened for appending.
  explicit DecisionLog(std::filesystem::path path);
  ~DecisionLog();
  DecisionLog(const DecisionLog&) = delete;
  DecisionLog& operator=(const DecisionLog&) = delete;

  void append(const ReviewDecision& decision);
  std::vector<ReviewDecision> read_all() const;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  mutable std::mutex mutex_;
};

// Removes frames covered by any reject decision for this sequence. Reject
// wins over accept on overlap. Throws kOutOfRange when a decision for this
// sequence falls outside [0, last frame index].
SequenceManifest filter_dataset(const SequenceManifest& manifest,
                                std::span<const ReviewDecision> decisions);

}  // namespace handseg
