#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "handseg/error.hpp"

namespace handseg {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

enum class Label : std::uint8_t { kBackground = 0, kLeft = 1, kRight = 2 };

inline constexpr int kNumClasses = 3;

// Row-major 2D raster. Width and height are at least 1 for every raster that
// holds image data; a default-constructed raster is empty.
template <typename T>
class Raster {
 public:
  using value_type = T;

  Raster() = default;
  Raster(int width, int height, T fill = T{}) : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      throw Error(ErrorCode::kInvalidParameter, "raster dimensions must be >= 1");
    }
    data_.assign(static_cast<std::size_t>(width) * height, fill);
  }
  Raster(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (width < 1 || height < 1) {
      throw Error(ErrorCode::kInvalidParameter, "raster dimensions must be >= 1");
    }
    if (data_.size() != static_cast<std::size_t>(width) * height) {
      throw Error(ErrorCode::kDimensionMismatch, "raster data length != width*height");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool in_bounds(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }
  bool same_shape(const auto& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  T& operator()(int x, int y) noexcept { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const noexcept { return data_[index(x, y)]; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<T> pixels() noexcept { return data_; }
  std::span<const T> pixels() const noexcept { return data_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using ColorFrame = Raster<Rgb>;
// Millimeters; 0 means no measurement.
using DepthFrame = Raster<std::uint16_t>;
using LabelMask = Raster<Label>;
using BinaryMask = Raster<std::uint8_t>;
using FloatRaster = Raster<float>;
using DoubleRaster = Raster<double>;

inline bool is_valid_label(std::uint8_t v) { return v <= 2; }

}  // namespace handseg
