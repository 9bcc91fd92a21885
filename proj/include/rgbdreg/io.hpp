#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "rgbdreg/camera.hpp"
#include "rgbdreg/error.hpp"
#include "rgbdreg/image.hpp"
#include "rgbdreg/rigid_transform.hpp"

namespace rgbdreg::io {

namespace fs = std::filesystem;

/// Pose files are accepted when within this distance of a rotation, then
/// projected onto SO(3).
inline constexpr double kPoseFileTolerance = 1e-6;

namespace detail {

struct PngImage {
  png_image image;
  PngImage() {
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

inline void check_png(bool ok, const PngImage& png, const fs::path& path, const char* action) {
  if (!ok || PNG_IMAGE_FAILED(png.image)) {
    throw InputError(std::string(action) + " " + path.string() + ": " + png.image.message);
  }
}

inline void read_png(const fs::path& path, png_uint_32 format, std::vector<std::uint8_t>& buffer,
                     int& width, int& height) {
  if (!fs::exists(path)) throw InputError("missing file " + path.string());
  PngImage png;
  check_png(png_image_begin_read_from_file(&png.image, path.c_str()) != 0, png, path, "reading");
  png.image.format = format;
  buffer.resize(PNG_IMAGE_SIZE(png.image));
  check_png(png_image_finish_read(&png.image, nullptr, buffer.data(), 0, nullptr) != 0, png,
            path, "decoding");
  width = static_cast<int>(png.image.width);
  height = static_cast<int>(png.image.height);
}

inline void write_png(const fs::path& path, png_uint_32 format, const void* buffer, int width,
                      int height) {
  PngImage png;
  png.image.width = static_cast<png_uint_32>(width);
  png.image.height = static_cast<png_uint_32>(height);
  png.image.format = format;
  check_png(png_image_write_to_file(&png.image, path.c_str(), 0, buffer, 0, nullptr) != 0, png,
            path, "writing");
}

}  // namespace detail

/// 8-bit RGB PNG to colors in [0, 1].
inline ColorImage read_color_png(const fs::path& path) {
  std::vector<std::uint8_t> buf;
  int w = 0, h = 0;
  detail::read_png(path, PNG_FORMAT_RGB, buf, w, h);
  ColorImage img(w, h, 3);
  for (std::size_t i = 0; i < buf.size(); ++i) img.data()[i] = static_cast<float>(buf[i] / 255.0);
  return img;
}

inline void write_color_png(const fs::path& path, const ColorImage& img) {
  if (img.channels() != 3) throw DimensionMismatchError("color PNG needs 3 channels");
  std::vector<std::uint8_t> buf(img.data().size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const double c = std::clamp(static_cast<double>(img.data()[i]), 0.0, 1.0);
    buf[i] = static_cast<std::uint8_t>(std::lround(c * 255.0));
  }
  detail::write_png(path, PNG_FORMAT_RGB, buf.data(), img.width(), img.height());
}

/// Raw 16-bit single channel samples. 16-bit files without a gamma chunk are
/// treated as linear by libpng, so values pass through untouched.
inline Image<std::uint16_t> read_gray16_png(const fs::path& path) {
  std::vector<std::uint8_t> buf;
  int w = 0, h = 0;
  detail::read_png(path, PNG_FORMAT_LINEAR_Y, buf, w, h);
  Image<std::uint16_t> img(w, h, 1);
  std::memcpy(img.data().data(), buf.data(), buf.size());
  return img;
}

inline void write_gray16_png(const fs::path& path, const Image<std::uint16_t>& img) {
  detail::write_png(path, PNG_FORMAT_LINEAR_Y, img.data().data(), img.width(), img.height());
}

/// Depth PNG in millimeters, 0 = missing.
inline DepthMap read_depth_png(const fs::path& path) {
  const auto raw = read_gray16_png(path);
  Image<double> depth(raw.width(), raw.height(), 1);
  for (std::size_t i = 0; i < raw.data().size(); ++i) depth.data()[i] = raw.data()[i] / 1000.0;
  return DepthMap(std::move(depth));
}

/// Quantizes to whole millimeters; depths beyond 65.535 m are rejected.
inline void write_depth_png(const fs::path& path, const Image<double>& depth) {
  Image<std::uint16_t> raw(depth.width(), depth.height(), 1);
  for (std::size_t i = 0; i < raw.data().size(); ++i) {
    const double mm = std::round(depth.data()[i] * 1000.0);
    if (!(mm >= 0.0 && mm <= 65535.0)) {
      throw InputError("depth " + std::to_string(depth.data()[i]) + " m not encodable in " +
                       path.string());
    }
    raw.data()[i] = static_cast<std::uint16_t>(mm);
  }
  write_gray16_png(path, raw);
}

inline void write_mask_png(const fs::path& path, const Image<std::uint8_t>& mask) {
  std::vector<std::uint8_t> buf(mask.data().size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = mask.data()[i] ? 255 : 0;
  detail::write_png(path, PNG_FORMAT_GRAY, buf.data(), mask.width(), mask.height());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("missing file " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

/// `fx fy cx cy width height`, whitespace separated.
inline CameraIntrinsics read_intrinsics(const fs::path& path) {
  std::istringstream is(read_text(path));
  double fx, fy, cx, cy;
  int w, h;
  if (!(is >> fx >> fy >> cx >> cy >> w >> h)) {
    throw InputError(path.string() + ": expected 'fx fy cx cy width height'");
  }
  try {
    return CameraIntrinsics(fx, fy, cx, cy, w, h);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

inline void write_intrinsics(const fs::path& path, const CameraIntrinsics& k) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write " + path.string());
  os << std::setprecision(17) << k.fx() << ' ' << k.fy() << ' ' << k.cx() << ' ' << k.cy() << ' '
     << k.width() << ' ' << k.height() << '\n';
}

/// Row-major 3x4 [R|t].
inline RigidTransform read_pose(const fs::path& path) {
  std::istringstream is(read_text(path));
  Eigen::Matrix<double, 3, 4> m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c)
      if (!(is >> m(r, c))) throw InputError(path.string() + ": expected 12 numbers (3x4 [R|t])");
  try {
    return RigidTransform::from_approximate(m.leftCols<3>(), m.col(3), kPoseFileTolerance);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

inline void write_pose(const fs::path& path, const RigidTransform& t) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write " + path.string());
  os << std::setprecision(17);
  const auto m = t.matrix3x4();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) os << m(r, c) << (c < 3 ? ' ' : '\n');
  }
}

/// Frame directory: color.png, depth.png, intrinsics.txt.
inline RGBDFrame read_frame(const fs::path& dir) {
  ColorImage color = read_color_png(dir / "color.png");
  DepthMap depth = read_depth_png(dir / "depth.png");
  const CameraIntrinsics k = read_intrinsics(dir / "intrinsics.txt");
  try {
    return RGBDFrame(std::move(color), std::move(depth), k);
  } catch (const InputError& e) {
    throw InputError(dir.string() + ": " + e.what());
  }
}

inline void write_frame(const fs::path& dir, const RGBDFrame& frame) {
  fs::create_directories(dir);
  write_color_png(dir / "color.png", frame.color());
  write_depth_png(dir / "depth.png", frame.depth().image());
  write_intrinsics(dir / "intrinsics.txt", frame.intrinsics());
}

}  // namespace rgbdreg::io
