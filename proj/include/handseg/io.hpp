#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "handseg/image.hpp"

namespace handseg {

namespace fs = std::filesystem;

// PNG codecs. Depth is 16-bit grayscale, color 8-bit RGB, labels 8-bit
// grayscale restricted to {0,1,2}. Any other layout is kMalformedImage.
DepthFrame read_depth_png(const fs::path& path);
ColorFrame read_color_png(const fs::path& path);
LabelMask load_label(const fs::path& path);

void write_depth_png(const DepthFrame& depth, const fs::path& path);
void write_color_png(const ColorFrame& color, const fs::path& path);
void save_label(const LabelMask& mask, const fs::path& path);
void write_gray_png(const BinaryMask& mask, const fs::path& path);

std::vector<std::uint8_t> encode_color_png(const ColorFrame& color);
ColorFrame decode_color_png(const std::vector<std::uint8_t>& bytes);

struct FrameEntry {
  int index = 0;
  std::string depth;   // relative to the manifest directory
  std::string color;
  std::optional<std::string> label;
};

struct SequenceManifest {
  std::string sequence_id;
  std::string subject_id;
  std::string camera;
  std::vector<FrameEntry> frames;
  // Directory the relative paths resolve against; not serialized.
  fs::path base_dir;

  fs::path resolve(const std::string& relative) const { return base_dir / relative; }
  const FrameEntry* find(int index) const;
};

enum class FileCheck { kStrict, kLenient };

// Parses and validates a manifest. kStrict also requires every referenced file
// to exist; kLenient leaves that to per-frame loading.
SequenceManifest load_manifest(const fs::path& path, FileCheck check = FileCheck::kStrict);
void save_manifest(const SequenceManifest& manifest, const fs::path& path);
std::string manifest_to_json_text(const SequenceManifest& manifest);
// Rewrites frame paths so they resolve from `new_base` instead.
SequenceManifest rebase_manifest(const SequenceManifest& manifest, const fs::path& new_base);

struct FramePair {
  DepthFrame depth;
  ColorFrame color;
};

// Loads the registered depth+color pair; kMissingFile, kMalformedImage or
// kDimensionMismatch on contract violations.
FramePair load_frame_pair(const SequenceManifest& manifest, const FrameEntry& entry);

// Writes `bytes` to `path` via a sibling temporary and rename.
void write_file_atomic(const fs::path& path, const std::string& bytes);
std::string read_text_file(const fs::path& path);

}  // namespace handseg
