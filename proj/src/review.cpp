#include "handseg/review.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <sstream>

#include <nlohmann/json.hpp>

namespace handseg {

using json = nlohmann::json;

std::string decision_to_json_line(const ReviewDecision& d) {
  json doc{{"sequence_id", d.sequence_id},
           {"start", d.start},
           {"end", d.end},
           {"verdict", d.verdict == Verdict::kAccept ? "accept" : "reject"},
           {"reviewer", d.reviewer},
           {"timestamp", d.timestamp}};
  return doc.dump();
}

ReviewDecision decision_from_json_text(const std::string& text) {
  ReviewDecision d;
  try {
    const json doc = json::parse(text);
    d.sequence_id = doc.at("sequence_id").get<std::string>();
    d.start = doc.at("start").get<int>();
    d.end = doc.at("end").get<int>();
    const std::string verdict = doc.at("verdict").get<std::string>();
    if (verdict == "accept") {
      d.verdict = Verdict::kAccept;
    } else if (verdict == "reject") {
      d.verdict = Verdict::kReject;
    } else {
      throw Error(ErrorCode::kConfig, "verdict must be 'accept' or 'reject'");
    }
    d.reviewer = doc.value("reviewer", "");
    d.timestamp = doc.value("timestamp", "");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("malformed review decision: ") + e.what());
  }
  if (d.sequence_id.empty()) throw Error(ErrorCode::kConfig, "decision without sequence_id");
  if (d.start < 0 || d.start > d.end) {
    throw Error(ErrorCode::kConfig, "decision range must satisfy 0 <= start <= end");
  }
  return d;
}

std::vector<ReviewDecision> load_decisions(const std::filesystem::path& path) {
  std::vector<ReviewDecision> out;
  if (!std::filesystem::exists(path)) return out;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(decision_from_json_text(line));
  }
  return out;
}

std::string utc_timestamp_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

DecisionLog::DecisionLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path_.parent_path(), ec);
  }
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) {
    throw Error(ErrorCode::kIo,
                "cannot open decisions file " + path_.string() + ": " + std::strerror(errno));
  }
}

DecisionLog::~DecisionLog() {
  if (fd_ >= 0) ::close(fd_);
}

void DecisionLog::append(const ReviewDecision& decision) {
  const std::string line = decision_to_json_line(decision) + "\n";
  std::lock_guard lock(mutex_);
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::kIo, "decision append failed: " + std::string(std::strerror(errno)));
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) {
    throw Error(ErrorCode::kIo, "fsync failed: " + std::string(std::strerror(errno)));
  }
}

std::vector<ReviewDecision> DecisionLog::read_all() const {
  std::lock_guard lock(mutex_);
  return load_decisions(path_);
}

SequenceManifest filter_dataset(const SequenceManifest& manifest,
                                std::span<const ReviewDecision> decisions) {
  SequenceManifest out = manifest;
  out.frames.clear();
  const int last = manifest.frames.empty() ? -1 : manifest.frames.back().index;
  std::vector<const ReviewDecision*> rejects;
  for (const auto& d : decisions) {
    if (d.sequence_id != manifest.sequence_id) continue;
    if (d.start < 0 || d.start > d.end || d.end > last) {
      throw Error(ErrorCode::kOutOfRange,
                  "decision [" + std::to_string(d.start) + "," + std::to_string(d.end) +
                      "] outside sequence " + manifest.sequence_id);
    }
    if (d.verdict == Verdict::kReject) rejects.push_back(&d);
  }
  for (const auto& f : manifest.frames) {
    const bool rejected = std::any_of(rejects.begin(), rejects.end(), [&](const auto* d) {
      return f.index >= d->start && f.index <= d->end;
    });
    if (!rejected) out.frames.push_back(f);
  }
  return out;
}

}  // namespace handseg
