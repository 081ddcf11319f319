#include "handseg/io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace handseg {

namespace {

using json = nlohmann::json;

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Decoded PNG before it is mapped onto one of the typed rasters.
struct RawPng {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  int color_type = 0;
  std::vector<std::uint8_t> bytes;  // 16-bit samples are host-order uint16
};

struct MemoryReader {
  const std::vector<std::uint8_t>* data;
  std::size_t offset = 0;
};

void read_from_memory(png_structp png, png_bytep out, png_size_t length) {
  auto* reader = static_cast<MemoryReader*>(png_get_io_ptr(png));
  if (reader->offset + length > reader->data->size()) png_error(png, "truncated PNG");
  std::memcpy(out, reader->data->data() + reader->offset, length);
  reader->offset += length;
}

void write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void flush_noop(png_structp) {}

// Returns false on any libpng failure. No C++ objects with non-trivial
// destructors live in frames libpng may longjmp across.
bool decode_png(std::FILE* file, MemoryReader* memory, RawPng& out) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  if (file != nullptr) {
    png_init_io(png, file);
  } else {
    png_set_read_fn(png, memory, read_from_memory);
  }
  png_read_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.bit_depth = png_get_bit_depth(png, info);
  out.color_type = png_get_color_type(png, info);
  if (png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) {
    png_set_interlace_handling(png);
  }
  if (out.bit_depth == 16) png_set_swap(png);
  png_read_update_info(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  out.bytes.resize(stride * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = out.bytes.data() + stride * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

RawPng read_png(const fs::path& path) {
  if (!fs::exists(path)) {
    throw Error(ErrorCode::kMissingFile, "missing file: " + path.string());
  }
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  png_byte signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw Error(ErrorCode::kMalformedImage, "not a PNG file: " + path.string());
  }
  std::rewind(file.get());
  RawPng raw;
  if (!decode_png(file.get(), nullptr, raw)) {
    throw Error(ErrorCode::kMalformedImage, "corrupt PNG: " + path.string());
  }
  return raw;
}

bool encode_png(std::FILE* file, std::vector<std::uint8_t>* memory, int width, int height,
                int bit_depth, int color_type, const std::uint8_t* pixels,
                std::size_t stride) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) {
    rows[y] = const_cast<png_bytep>(pixels + stride * y);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  if (file != nullptr) {
    png_init_io(png, file);
  } else {
    png_set_write_fn(png, memory, write_to_vector, flush_noop);
  }
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

void write_png(const fs::path& path, int width, int height, int bit_depth, int color_type,
               const std::uint8_t* pixels, std::size_t stride) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  if (!encode_png(file.get(), nullptr, width, height, bit_depth, color_type, pixels, stride)) {
    throw Error(ErrorCode::kIo, "PNG encoding failed: " + path.string());
  }
}

ColorFrame color_from_raw(const RawPng& raw, const std::string& what) {
  if (raw.bit_depth != 8 || raw.color_type != PNG_COLOR_TYPE_RGB) {
    throw Error(ErrorCode::kMalformedImage, what + ": expected 8-bit RGB PNG");
  }
  ColorFrame color(raw.width, raw.height);
  for (std::size_t i = 0; i < color.size(); ++i) {
    color[i] = {raw.bytes[3 * i], raw.bytes[3 * i + 1], raw.bytes[3 * i + 2]};
  }
  return color;
}

}  // namespace

DepthFrame read_depth_png(const fs::path& path) {
  const RawPng raw = read_png(path);
  if (raw.bit_depth != 16 || raw.color_type != PNG_COLOR_TYPE_GRAY) {
    throw Error(ErrorCode::kMalformedImage, path.string() + ": expected 16-bit grayscale PNG");
  }
  DepthFrame depth(raw.width, raw.height);
  std::memcpy(depth.pixels().data(), raw.bytes.data(), depth.size() * sizeof(std::uint16_t));
  return depth;
}

ColorFrame read_color_png(const fs::path& path) {
  return color_from_raw(read_png(path), path.string());
}

LabelMask load_label(const fs::path& path) {
  const RawPng raw = read_png(path);
  if (raw.bit_depth != 8 || raw.color_type != PNG_COLOR_TYPE_GRAY) {
    throw Error(ErrorCode::kMalformedImage, path.string() + ": expected 8-bit grayscale PNG");
  }
  LabelMask mask(raw.width, raw.height);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!is_valid_label(raw.bytes[i])) {
      throw Error(ErrorCode::kMalformedLabel,
                  path.string() + ": label value " + std::to_string(raw.bytes[i]) +
                      " outside {0,1,2}");
    }
    mask[i] = static_cast<Label>(raw.bytes[i]);
  }
  return mask;
}

void write_depth_png(const DepthFrame& depth, const fs::path& path) {
  write_png(path, depth.width(), depth.height(), 16, PNG_COLOR_TYPE_GRAY,
            reinterpret_cast<const std::uint8_t*>(depth.pixels().data()),
            sizeof(std::uint16_t) * depth.width());
}

void write_color_png(const ColorFrame& color, const fs::path& path) {
  static_assert(sizeof(Rgb) == 3);
  write_png(path, color.width(), color.height(), 8, PNG_COLOR_TYPE_RGB,
            reinterpret_cast<const std::uint8_t*>(color.pixels().data()), 3 * color.width());
}

void save_label(const LabelMask& mask, const fs::path& path) {
  static_assert(sizeof(Label) == 1);
  write_png(path, mask.width(), mask.height(), 8, PNG_COLOR_TYPE_GRAY,
            reinterpret_cast<const std::uint8_t*>(mask.pixels().data()), mask.width());
}

void write_gray_png(const BinaryMask& mask, const fs::path& path) {
  write_png(path, mask.width(), mask.height(), 8, PNG_COLOR_TYPE_GRAY, mask.pixels().data(),
            mask.width());
}

std::vector<std::uint8_t> encode_color_png(const ColorFrame& color) {
  std::vector<std::uint8_t> out;
  if (!encode_png(nullptr, &out, color.width(), color.height(), 8, PNG_COLOR_TYPE_RGB,
                  reinterpret_cast<const std::uint8_t*>(color.pixels().data()),
                  3 * color.width())) {
    throw Error(ErrorCode::kIo, "PNG encoding failed");
  }
  return out;
}

ColorFrame decode_color_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw Error(ErrorCode::kMalformedImage, "not a PNG buffer");
  }
  MemoryReader reader{&bytes};
  RawPng raw;
  if (!decode_png(nullptr, &reader, raw)) {
    throw Error(ErrorCode::kMalformedImage, "corrupt PNG buffer");
  }
  return color_from_raw(raw, "buffer");
}

const FrameEntry* SequenceManifest::find(int index) const {
  for (const auto& f : frames) {
    if (f.index == index) return &f;
  }
  return nullptr;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out << bytes;
    if (!out) throw Error(ErrorCode::kIo, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

SequenceManifest load_manifest(const fs::path& path, FileCheck check) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedManifest, path.string() + ": " + e.what());
  }
  SequenceManifest m;
  m.base_dir = path.parent_path();
  try {
    m.sequence_id = doc.at("sequence_id").get<std::string>();
    m.subject_id = doc.value("subject_id", "");
    m.camera = doc.value("camera", "");
    for (const auto& f : doc.at("frames")) {
      FrameEntry e;
      e.index = f.at("index").get<int>();
      e.depth = f.at("depth").get<std::string>();
      e.color = f.at("color").get<std::string>();
      if (f.contains("label") && !f.at("label").is_null()) {
        e.label = f.at("label").get<std::string>();
      }
      m.frames.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedManifest, path.string() + ": " + e.what());
  }
  for (std::size_t i = 1; i < m.frames.size(); ++i) {
    if (m.frames[i].index <= m.frames[i - 1].index) {
      throw Error(ErrorCode::kMalformedManifest,
                  path.string() + ": frame indices must be strictly increasing");
    }
  }
  if (check == FileCheck::kStrict) {
    for (const auto& f : m.frames) {
      for (const std::string* rel : {&f.depth, &f.color}) {
        if (!fs::exists(m.resolve(*rel))) {
          throw Error(ErrorCode::kMissingFile, "manifest references missing " + *rel);
        }
      }
      if (f.label && !fs::exists(m.resolve(*f.label))) {
        throw Error(ErrorCode::kMissingFile, "manifest references missing " + *f.label);
      }
    }
  }
  return m;
}

std::string manifest_to_json_text(const SequenceManifest& manifest) {
  json doc;
  doc["sequence_id"] = manifest.sequence_id;
  doc["subject_id"] = manifest.subject_id;
  doc["camera"] = manifest.camera;
  doc["frames"] = json::array();
  for (const auto& f : manifest.frames) {
    json e{{"index", f.index}, {"depth", f.depth}, {"color", f.color}};
    if (f.label) e["label"] = *f.label;
    doc["frames"].push_back(std::move(e));
  }
  return doc.dump(2) + "\n";
}

void save_manifest(const SequenceManifest& manifest, const fs::path& path) {
  write_file_atomic(path, manifest_to_json_text(manifest));
}

FramePair load_frame_pair(const SequenceManifest& manifest, const FrameEntry& entry) {
  FramePair pair{read_depth_png(manifest.resolve(entry.depth)),
                 read_color_png(manifest.resolve(entry.color))};
  if (!pair.depth.same_shape(pair.color)) {
    throw Error(ErrorCode::kDimensionMismatch,
                "depth " + std::to_string(pair.depth.width()) + "x" +
                    std::to_string(pair.depth.height()) + " vs color " +
                    std::to_string(pair.color.width()) + "x" +
                    std::to_string(pair.color.height()));
  }
  return pair;
}

SequenceManifest rebase_manifest(const SequenceManifest& manifest, const fs::path& new_base) {
  SequenceManifest out = manifest;
  const fs::path from = fs::weakly_canonical(fs::absolute(manifest.base_dir));
  const fs::path to = fs::weakly_canonical(fs::absolute(new_base));
  const auto move = [&](const std::string& rel) {
    return (from / rel).lexically_relative(to).generic_string();
  };
  for (auto& f : out.frames) {
    f.depth = move(f.depth);
    f.color = move(f.color);
    if (f.label) f.label = move(*f.label);
  }
  out.base_dir = new_base;
  return out;
}

}  // namespace handseg
