#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <utility>
#include <vector>

#include "rgbdreg/error.hpp"

namespace rgbdreg {

/// Dense row-major image with interleaved channels.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, T fill = T{})
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {
    if (width < 0 || height < 0 || channels <= 0) {
      throw DimensionMismatchError("negative image size or zero channels");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
  bool same_size(int width, int height) const { return width_ == width && height_ == height; }

  T& at(int u, int v, int c = 0) { return data_[index(u, v, c)]; }
  const T& at(int u, int v, int c = 0) const { return data_[index(u, v, c)]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int u, int v, int c) const {
    return (static_cast<std::size_t>(v) * width_ + u) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

/// RGB in [0, 1].
using ColorImage = Image<float>;

/// Metric depth in meters. A value of exactly 0 marks missing depth.
class DepthMap {
 public:
  static constexpr double kMissing = 0.0;

  DepthMap() = default;
  DepthMap(int width, int height) : image_(width, height, 1, kMissing) {}

  explicit DepthMap(Image<double> image) : image_(std::move(image)) {
    if (image_.channels() != 1) throw DimensionMismatchError("depth map must be single channel");
    for (int v = 0; v < height(); ++v) {
      for (int u = 0; u < width(); ++u) check_value(u, v, image_.at(u, v));
    }
  }

  int width() const { return image_.width(); }
  int height() const { return image_.height(); }

  double at(int u, int v) const { return image_.at(u, v); }
  bool has_depth(int u, int v) const { return image_.at(u, v) != kMissing; }

  void set(int u, int v, double depth) {
    check_value(u, v, depth);
    image_.at(u, v) = depth;
  }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (double d : image_.data()) n += d != kMissing;
    return n;
  }

  const Image<double>& image() const { return image_; }

  friend bool operator==(const DepthMap&, const DepthMap&) = default;

 private:
  static void check_value(int u, int v, double d) {
    if (d == kMissing) return;
    if (!std::isfinite(d) || d < 0.0) {
      std::ostringstream os;
      os << "invalid depth " << d << " at pixel (" << u << ", " << v << ")";
      throw InputError(os.str());
    }
  }

  Image<double> image_;
};

}  // namespace rgbdreg
