#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>

#include "rgbdreg/camera.hpp"
#include "rgbdreg/error.hpp"
#include "rgbdreg/image.hpp"

namespace rgbdreg {

using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// H x W x F dense feature map, stored row-major with features innermost.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int width, int height, int dim)
      : width_(width), height_(height), dim_(dim),
        data_(static_cast<std::size_t>(width) * height * dim, 0.0f) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int dim() const { return dim_; }

  float* pixel(int u, int v) { return data_.data() + offset(u, v); }
  const float* pixel(int u, int v) const { return data_.data() + offset(u, v); }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t offset(int u, int v) const {
    return (static_cast<std::size_t>(v) * width_ + u) * dim_;
  }

  int width_ = 0;
  int height_ = 0;
  int dim_ = 0;
  std::vector<float> data_;
};

struct DescriptorConfig {
  int dim = 32;
  /// Seeds the fixed random projection of the color patch.
  std::uint64_t projection_seed = 0x5eed'0f'ca7c4ULL;
};

namespace detail {

inline constexpr int kPatchRadius = 2;
inline constexpr int kPatchSide = 2 * kPatchRadius + 1;
inline constexpr int kPatchValues = kPatchSide * kPatchSide * 3;
inline constexpr int kOrientationBins = 8;

/// Rows form an orthonormal basis of a (dim - 8)-dimensional subspace of the
/// 75-dimensional patch space.
inline Eigen::MatrixXd patch_projection(int out_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd g(kPatchValues, out_dim);
  for (int c = 0; c < out_dim; ++c)
    for (int r = 0; r < kPatchValues; ++r) g(r, c) = gauss(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(kPatchValues, out_dim);
  return q.transpose();
}

inline void normalize_or_uniform(std::span<double> f) {
  double sq = 0.0;
  for (double x : f) sq += x * x;
  if (sq > 1e-24) {
    const double inv = 1.0 / std::sqrt(sq);
    for (double& x : f) x *= inv;
  } else {
    const double u = 1.0 / std::sqrt(static_cast<double>(f.size()));
    for (double& x : f) x = u;
  }
}

}  // namespace detail

/// Dense handcrafted descriptor: a mean-subtracted 5x5 color patch under a
/// fixed random orthogonal projection, concatenated with an 8-bin gradient
/// orientation histogram of the same patch, L2-normalized. Borders replicate.
inline FeatureMap extract_features(const ColorImage& image, const DescriptorConfig& config) {
  using namespace detail;
  const int proj_dim = config.dim - kOrientationBins;
  if (proj_dim < 1 || proj_dim > kPatchValues) {
    std::ostringstream os;
    os << "unsupported feature dimension " << config.dim << " (patch descriptor supports "
       << kOrientationBins + 1 << ".." << kOrientationBins + kPatchValues << ")";
    throw ConfigError(os.str());
  }
  if (image.channels() != 3) throw DimensionMismatchError("descriptor expects an RGB image");

  const int w = image.width();
  const int h = image.height();
  auto clamp_u = [w](int u) { return std::clamp(u, 0, w - 1); };
  auto clamp_v = [h](int v) { return std::clamp(v, 0, h - 1); };

  Image<double> gray(w, h, 1);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u)
      gray.at(u, v) = 0.299 * image.at(u, v, 0) + 0.587 * image.at(u, v, 1) +
                      0.114 * image.at(u, v, 2);

  // Per-pixel orientation bin and magnitude of the central-difference gradient.
  Image<double> magnitude(w, h, 1);
  Image<int> bin(w, h, 1);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const double gx = 0.5 * (gray.at(clamp_u(u + 1), v) - gray.at(clamp_u(u - 1), v));
      const double gy = 0.5 * (gray.at(u, clamp_v(v + 1)) - gray.at(u, clamp_v(v - 1)));
      magnitude.at(u, v) = std::hypot(gx, gy);
      const double theta = std::atan2(gy, gx) + std::numbers::pi;
      int b = static_cast<int>(theta / (2.0 * std::numbers::pi) * kOrientationBins);
      bin.at(u, v) = std::clamp(b, 0, kOrientationBins - 1);
    }
  }

  const Eigen::MatrixXd projection = patch_projection(proj_dim, config.projection_seed);
  FeatureMap out(w, h, config.dim);
  Eigen::VectorXd patch(kPatchValues);
  std::vector<double> feature(config.dim);

  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      std::array<double, 3> mean{};
      std::array<double, kOrientationBins> hist{};
      int idx = 0;
      for (int dv = -kPatchRadius; dv <= kPatchRadius; ++dv) {
        for (int du = -kPatchRadius; du <= kPatchRadius; ++du) {
          const int su = clamp_u(u + du);
          const int sv = clamp_v(v + dv);
          for (int c = 0; c < 3; ++c) {
            patch[idx++] = image.at(su, sv, c);
            mean[c] += image.at(su, sv, c);
          }
          hist[bin.at(su, sv)] += magnitude.at(su, sv);
        }
      }
      for (int c = 0; c < 3; ++c) mean[c] /= kPatchSide * kPatchSide;
      for (int i = 0; i < kPatchValues; ++i) patch[i] -= mean[i % 3];

      const Eigen::VectorXd projected = projection * patch;
      for (int i = 0; i < proj_dim; ++i) feature[i] = projected[i];
      for (int i = 0; i < kOrientationBins; ++i) feature[proj_dim + i] = hist[i];
      normalize_or_uniform(feature);

      float* dst = out.pixel(u, v);
      for (int i = 0; i < config.dim; ++i) dst[i] = static_cast<float>(feature[i]);
    }
  }
  return out;
}

// Feature map files: 20-byte little-endian header
//   char[4] magic "RFMP", u32 height, u32 width, u32 dim, u32 normalized
// followed by height * width * dim float32 values, row-major, features innermost.
// normalized = 0 asks the loader to L2-normalize every vector.

inline constexpr std::array<char, 4> kFeatureMagic{'R', 'F', 'M', 'P'};

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t x) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  os.write(reinterpret_cast<const char*>(&x), sizeof x);
}

inline std::uint32_t read_u32(std::istream& is) {
  std::uint32_t x = 0;
  is.read(reinterpret_cast<char*>(&x), sizeof x);
  return x;
}

}  // namespace detail

inline void save_feature_map(const std::filesystem::path& path, const FeatureMap& map,
                             bool normalized = true) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  os.write(kFeatureMagic.data(), kFeatureMagic.size());
  detail::write_u32(os, static_cast<std::uint32_t>(map.height()));
  detail::write_u32(os, static_cast<std::uint32_t>(map.width()));
  detail::write_u32(os, static_cast<std::uint32_t>(map.dim()));
  detail::write_u32(os, normalized ? 1u : 0u);
  os.write(reinterpret_cast<const char*>(map.data().data()),
           static_cast<std::streamsize>(map.data().size() * sizeof(float)));
  if (!os) throw InputError("failed writing " + path.string());
}

struct ExpectedFeatureDims {
  int width = 0;
  int height = 0;
  int dim = 0;  ///< 0 accepts any feature dimension
};

inline FeatureMap load_feature_map(const std::filesystem::path& path,
                                   const ExpectedFeatureDims& expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open feature map " + path.string());
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kFeatureMagic) throw InputError(path.string() + ": not a feature map file");
  const std::uint32_t h = detail::read_u32(is);
  const std::uint32_t w = detail::read_u32(is);
  const std::uint32_t f = detail::read_u32(is);
  const std::uint32_t normalized = detail::read_u32(is);
  if (!is) throw InputError(path.string() + ": truncated header");

  if (static_cast<int>(h) != expected.height || static_cast<int>(w) != expected.width ||
      (expected.dim != 0 && static_cast<int>(f) != expected.dim) || f == 0) {
    std::ostringstream os;
    os << path.string() << ": file holds " << h << "x" << w << "x" << f << " (HxWxF), expected "
       << expected.height << "x" << expected.width << "x";
    if (expected.dim) os << expected.dim; else os << "F";
    throw DimensionMismatchError(os.str());
  }

  FeatureMap map(static_cast<int>(w), static_cast<int>(h), static_cast<int>(f));
  is.read(reinterpret_cast<char*>(map.data().data()),
          static_cast<std::streamsize>(map.data().size() * sizeof(float)));
  if (!is) throw InputError(path.string() + ": truncated feature data");

  std::vector<double> scratch(f);
  for (int v = 0; v < map.height(); ++v) {
    for (int u = 0; u < map.width(); ++u) {
      float* px = map.pixel(u, v);
      for (std::uint32_t i = 0; i < f; ++i) {
        if (!std::isfinite(px[i])) {
          std::ostringstream os;
          os << path.string() << ": non-finite feature value at pixel (" << u << ", " << v
             << "), channel " << i;
          throw InputError(os.str());
        }
      }
      if (normalized == 0) {
        for (std::uint32_t i = 0; i < f; ++i) scratch[i] = px[i];
        detail::normalize_or_uniform(scratch);
        for (std::uint32_t i = 0; i < f; ++i) px[i] = static_cast<float>(scratch[i]);
      }
    }
  }
  return map;
}

/// Per-pixel point cloud carrying position, color and feature. Points without
/// depth stay in place (N = H * W) but are flagged invalid.
struct FeaturePointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> colors;
  FeatureMatrix features;  ///< N x F
  std::vector<bool> valid;
  std::vector<PixelIndex> pixel_index;

  std::size_t size() const { return positions.size(); }
  int feature_dim() const { return static_cast<int>(features.cols()); }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (bool b : valid) n += b;
    return n;
  }
};

inline FeaturePointCloud build_feature_cloud(const RGBDFrame& frame, const FeatureMap& features) {
  if (features.width() != frame.width() || features.height() != frame.height()) {
    std::ostringstream os;
    os << "feature map " << features.width() << "x" << features.height() << " vs frame "
       << frame.width() << "x" << frame.height();
    throw DimensionMismatchError(os.str());
  }
  UnprojectedPoints pts = unproject(frame);
  FeaturePointCloud cloud;
  const std::size_t n = pts.positions.size();
  cloud.positions = std::move(pts.positions);
  cloud.valid = std::move(pts.valid);
  cloud.pixel_index = std::move(pts.pixel_index);
  cloud.colors.resize(n);
  cloud.features.resize(static_cast<Eigen::Index>(n), features.dim());
  for (std::size_t i = 0; i < n; ++i) {
    const auto [u, v] = cloud.pixel_index[i];
    const auto& c = frame.color();
    cloud.colors[i] = {c.at(u, v, 0), c.at(u, v, 1), c.at(u, v, 2)};
    const float* f = features.pixel(u, v);
    for (int j = 0; j < features.dim(); ++j) cloud.features(static_cast<Eigen::Index>(i), j) = f[j];
  }
  return cloud;
}

/// Concatenation of two clouds, `a`'s points first.
inline FeaturePointCloud concatenate(const FeaturePointCloud& a, const FeaturePointCloud& b) {
  if (a.size() && b.size() && a.feature_dim() != b.feature_dim()) {
    throw DimensionMismatchError("cannot concatenate clouds with different feature dimensions");
  }
  FeaturePointCloud out = a;
  out.positions.insert(out.positions.end(), b.positions.begin(), b.positions.end());
  out.colors.insert(out.colors.end(), b.colors.begin(), b.colors.end());
  out.valid.insert(out.valid.end(), b.valid.begin(), b.valid.end());
  out.pixel_index.insert(out.pixel_index.end(), b.pixel_index.begin(), b.pixel_index.end());
  FeatureMatrix f(a.features.rows() + b.features.rows(),
                  std::max(a.features.cols(), b.features.cols()));
  if (a.features.rows()) f.topRows(a.features.rows()) = a.features;
  if (b.features.rows()) f.bottomRows(b.features.rows()) = b.features;
  out.features = std::move(f);
  return out;
}

}  // namespace rgbdreg
