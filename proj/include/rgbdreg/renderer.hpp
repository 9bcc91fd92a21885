#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "rgbdreg/camera.hpp"
#include "rgbdreg/descriptor.hpp"
#include "rgbdreg/error.hpp"
#include "rgbdreg/image.hpp"
#include "rgbdreg/rigid_transform.hpp"

namespace rgbdreg {

/// Depth differences below this count as a z-buffer tie.
inline constexpr double kDepthTieTolerance = 1e-9;

struct RenderConfig {
  /// Half-width of the square splat footprint; 0 paints a single pixel.
  int splat_radius = 0;
};

enum class RenderMode {
  kCross,  ///< each view rendered from the other frame's points only
  kJoint,  ///< each view rendered from the union of both clouds
};

/// Invalid pixels hold color (0, 0, 0) and depth 0.
struct RenderOutput {
  ColorImage color;
  Image<double> depth;
  Image<std::uint8_t> valid;

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto b : valid.data()) n += b != 0;
    return n;
  }
};

/// Hard z-buffered splatting of the valid points of `cloud`, where `view` maps
/// cloud coordinates into the camera frame. Points are visited in index order
/// and a point only replaces a pixel when it is nearer by more than the tie
/// tolerance, so ties keep the lower index.
inline RenderOutput splat_render(const FeaturePointCloud& cloud, const RigidTransform& view,
                                 const CameraIntrinsics& k, const RenderConfig& config = {}) {
  if (config.splat_radius < 0) throw ConfigError("splat radius must be non-negative");
  const int w = k.width();
  const int h = k.height();
  RenderOutput out{ColorImage(w, h, 3, 0.0f), Image<double>(w, h, 1, 0.0),
                   Image<std::uint8_t>(w, h, 1, 0)};
  const int r = config.splat_radius;

  Eigen::Vector2d px;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!cloud.valid[i]) continue;
    const Vec3 x = view(cloud.positions[i]);
    if (!project_point(x, k, px)) continue;
    const PixelIndex center = containing_pixel(px);
    for (int v = std::max(0, center.v - r); v <= std::min(h - 1, center.v + r); ++v) {
      for (int u = std::max(0, center.u - r); u <= std::min(w - 1, center.u + r); ++u) {
        if (out.valid.at(u, v) && !(x.z() < out.depth.at(u, v) - kDepthTieTolerance)) continue;
        out.valid.at(u, v) = 1;
        out.depth.at(u, v) = x.z();
        for (int c = 0; c < 3; ++c) out.color.at(u, v, c) = static_cast<float>(cloud.colors[i][c]);
      }
    }
  }
  return out;
}

/// Copy of `cloud` with positions mapped through `t`.
inline FeaturePointCloud transformed(const FeaturePointCloud& cloud, const RigidTransform& t) {
  FeaturePointCloud out = cloud;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out.valid[i]) out.positions[i] = t(out.positions[i]);
  return out;
}

/// Renders view 1 (the frame of `p_cloud`) and view 2 (the frame of `q_cloud`).
/// `p_to_q` maps view-1 coordinates into view 2.
inline std::pair<RenderOutput, RenderOutput> cross_render(const FeaturePointCloud& p_cloud,
                                                          const FeaturePointCloud& q_cloud,
                                                          const RigidTransform& p_to_q,
                                                          const CameraIntrinsics& k,
                                                          RenderMode mode = RenderMode::kCross,
                                                          const RenderConfig& config = {}) {
  const RigidTransform q_to_p = p_to_q.inverse();
  if (mode == RenderMode::kCross) {
    return {splat_render(q_cloud, q_to_p, k, config), splat_render(p_cloud, p_to_q, k, config)};
  }
  const FeaturePointCloud in_view1 = concatenate(p_cloud, transformed(q_cloud, q_to_p));
  const FeaturePointCloud in_view2 = concatenate(transformed(p_cloud, p_to_q), q_cloud);
  return {splat_render(in_view1, RigidTransform::identity(), k, config),
          splat_render(in_view2, RigidTransform::identity(), k, config)};
}

struct LossWeights {
  double photometric = 1.0;
  double depth = 1.0;
  double correspondence = 0.1;
};

struct LossReport {
  double photometric = 0.0;     ///< masked mean L1 over pixels and channels
  double depth = 0.0;           ///< masked mean L1, meters
  double correspondence = 0.0;  ///< weighted correspondence error, m^2
  double total = 0.0;
  std::vector<std::size_t> valid_pixel_counts;  ///< render-valid pixels per view
  bool photometric_zero_coverage = false;
  bool depth_zero_coverage = false;
};

/// A rendered view and the captured frame it should reproduce.
struct RenderedView {
  const RenderOutput* render = nullptr;
  const RGBDFrame* input = nullptr;
};

/// Photometric and depth L1 over valid pixels, pooled across all views, plus
/// the weighted correspondence term. Pixels invalid in the render never count;
/// the depth term also skips pixels without captured depth.
inline LossReport consistency_losses(std::span<const RenderedView> views,
                                     double correspondence_error,
                                     const LossWeights& weights = {}) {
  LossReport report;
  double color_sum = 0.0;
  double depth_sum = 0.0;
  std::size_t color_pixels = 0;
  std::size_t depth_pixels = 0;
  for (const auto& view : views) {
    const RenderOutput& r = *view.render;
    const RGBDFrame& in = *view.input;
    if (!r.color.same_size(in.width(), in.height()) || !r.valid.same_size(in.width(), in.height())) {
      throw DimensionMismatchError("render and input frame sizes differ");
    }
    std::size_t view_valid = 0;
    for (int v = 0; v < in.height(); ++v) {
      for (int u = 0; u < in.width(); ++u) {
        if (!r.valid.at(u, v)) continue;
        ++view_valid;
        for (int c = 0; c < 3; ++c)
          color_sum += std::abs(static_cast<double>(r.color.at(u, v, c)) - in.color().at(u, v, c));
        if (in.depth().has_depth(u, v)) {
          depth_sum += std::abs(r.depth.at(u, v) - in.depth().at(u, v));
          ++depth_pixels;
        }
      }
    }
    color_pixels += view_valid;
    report.valid_pixel_counts.push_back(view_valid);
  }
  report.photometric_zero_coverage = color_pixels == 0;
  report.depth_zero_coverage = depth_pixels == 0;
  report.photometric = color_pixels ? color_sum / (3.0 * static_cast<double>(color_pixels)) : 0.0;
  report.depth = depth_pixels ? depth_sum / static_cast<double>(depth_pixels) : 0.0;
  report.correspondence = correspondence_error;
  report.total = weights.photometric * report.photometric + weights.depth * report.depth +
                 weights.correspondence * report.correspondence;
  return report;
}

}  // namespace rgbdreg
