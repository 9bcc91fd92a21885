#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rgbdreg/error.hpp"
#include "rgbdreg/image.hpp"
#include "rgbdreg/rigid_transform.hpp"

namespace rgbdreg {

/// Pinhole intrinsics. Pixel centers sit at integer coordinates.
class CameraIntrinsics {
 public:
  CameraIntrinsics() = default;
  CameraIntrinsics(double fx, double fy, double cx, double cy, int width, int height)
      : fx_(fx), fy_(fy), cx_(cx), cy_(cy), width_(width), height_(height) {
    if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
      throw InputError("intrinsics: focal lengths must be positive and finite");
    }
    if (width <= 0 || height <= 0) throw InputError("intrinsics: image size must be positive");
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
      std::ostringstream os;
      os << "intrinsics: principal point (" << cx << ", " << cy << ") outside " << width << "x"
         << height << " image";
      throw InputError(os.str());
    }
  }

  double fx() const { return fx_; }
  double fy() const { return fy_; }
  double cx() const { return cx_; }
  double cy() const { return cy_; }
  int width() const { return width_; }
  int height() const { return height_; }

  /// Ray through pixel (u, v) scaled so that its z component is `depth`.
  Vec3 unproject(double u, double v, double depth) const {
    return {(u - cx_) * depth / fx_, (v - cy_) * depth / fy_, depth};
  }

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;

 private:
  double fx_ = 1.0, fy_ = 1.0, cx_ = 0.0, cy_ = 0.0;
  int width_ = 1, height_ = 1;
};

struct PixelIndex {
  int u = 0;
  int v = 0;
  friend bool operator==(const PixelIndex&, const PixelIndex&) = default;
};

class RGBDFrame {
 public:
  RGBDFrame() = default;
  RGBDFrame(ColorImage color, DepthMap depth, CameraIntrinsics intrinsics)
      : color_(std::move(color)), depth_(std::move(depth)), intrinsics_(intrinsics) {
    if (color_.channels() != 3) throw DimensionMismatchError("color image must have 3 channels");
    if (!color_.same_size(intrinsics_.width(), intrinsics_.height()) ||
        depth_.width() != intrinsics_.width() || depth_.height() != intrinsics_.height()) {
      std::ostringstream os;
      os << "color " << color_.width() << "x" << color_.height() << ", depth " << depth_.width()
         << "x" << depth_.height() << ", intrinsics " << intrinsics_.width() << "x"
         << intrinsics_.height();
      throw DimensionMismatchError(os.str());
    }
  }

  const ColorImage& color() const { return color_; }
  const DepthMap& depth() const { return depth_; }
  const CameraIntrinsics& intrinsics() const { return intrinsics_; }
  int width() const { return intrinsics_.width(); }
  int height() const { return intrinsics_.height(); }

  friend bool operator==(const RGBDFrame&, const RGBDFrame&) = default;

 private:
  ColorImage color_;
  DepthMap depth_;
  CameraIntrinsics intrinsics_;
};

struct UnprojectedPoints {
  std::vector<Vec3> positions;
  std::vector<bool> valid;
  std::vector<PixelIndex> pixel_index;
};

/// One point per pixel in row-major order; pixels without depth are kept but
/// marked invalid (their position is left at the origin).
inline UnprojectedPoints unproject(const RGBDFrame& frame) {
  const auto& k = frame.intrinsics();
  const std::size_t n = static_cast<std::size_t>(k.width()) * k.height();
  UnprojectedPoints out;
  out.positions.resize(n, Vec3::Zero());
  out.valid.resize(n, false);
  out.pixel_index.resize(n);
  std::size_t i = 0;
  for (int v = 0; v < k.height(); ++v) {
    for (int u = 0; u < k.width(); ++u, ++i) {
      out.pixel_index[i] = {u, v};
      if (!frame.depth().has_depth(u, v)) continue;
      out.positions[i] = k.unproject(u, v, frame.depth().at(u, v));
      out.valid[i] = true;
    }
  }
  return out;
}

struct Projection {
  std::vector<Eigen::Vector2d> pixels;
  std::vector<double> depths;
  std::vector<bool> in_frustum;
};

/// Integer pixel containing a projected coordinate (nearest pixel center).
inline PixelIndex containing_pixel(const Eigen::Vector2d& px) {
  return {static_cast<int>(std::lround(px.x())), static_cast<int>(std::lround(px.y()))};
}

/// Projects one camera-frame point. Returns false for z <= 0 or when the
/// containing pixel falls outside the image; `pixel` is only written for z > 0.
inline bool project_point(const Vec3& x, const CameraIntrinsics& k, Eigen::Vector2d& pixel) {
  if (!(x.z() > 0.0)) return false;
  pixel = {k.fx() * x.x() / x.z() + k.cx(), k.fy() * x.y() / x.z() + k.cy()};
  if (!(pixel.x() >= -0.5 && pixel.x() < k.width() - 0.5)) return false;
  if (!(pixel.y() >= -0.5 && pixel.y() < k.height() - 0.5)) return false;
  return true;
}

inline Projection project(std::span<const Vec3> points, const CameraIntrinsics& k) {
  Projection out;
  out.pixels.resize(points.size(), Eigen::Vector2d::Zero());
  out.depths.resize(points.size());
  out.in_frustum.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    out.depths[i] = points[i].z();
    out.in_frustum[i] = project_point(points[i], k, out.pixels[i]);
  }
  return out;
}

}  // namespace rgbdreg
