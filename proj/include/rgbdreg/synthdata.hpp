#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <vector>

#include "rgbdreg/camera.hpp"
#include "rgbdreg/error.hpp"
#include "rgbdreg/image.hpp"
#include "rgbdreg/io.hpp"
#include "rgbdreg/random.hpp"
#include "rgbdreg/rigid_transform.hpp"

namespace rgbdreg {

/// Minimum fraction of pixels with depth in every generated frame.
inline constexpr double kMinDepthCoverage = 0.3;

/// Axis-aligned textured primitive. A plane is a box with exactly one zero
/// extent (its normal axis).
struct Primitive {
  enum class Kind { kBox, kPlane };
  Kind kind = Kind::kBox;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();
  std::uint64_t texture_seed = 0;
};

struct SceneSpec {
  std::vector<Primitive> primitives;
  /// Camera-to-world pose of the first view.
  RigidTransform base_pose;
  double rotation_deg = 10.0;
  double translation_m = 0.2;
  /// Zero vectors draw a random direction from `seed`.
  Vec3 rotation_axis = Vec3::Zero();
  Vec3 translation_direction = Vec3::Zero();
  int width = 80;
  int height = 60;
  /// Focal length as a multiple of the image width.
  double focal_scale = 0.8;
  std::uint64_t seed = 0;
  double depth_noise_sigma = 0.0;  ///< meters, Gaussian
  double depth_dropout = 0.0;      ///< per-pixel probability of missing depth

  CameraIntrinsics intrinsics() const {
    const double f = focal_scale * width;
    return CameraIntrinsics(f, f, (width - 1) / 2.0, (height - 1) / 2.0, width, height);
  }

  /// A closed room (walls, floor, ceiling) with a few boxes in front of the
  /// back wall, all laid out from `seed`.
  static SceneSpec random_room(std::uint64_t seed, int width = 80, int height = 60) {
    SceneSpec s;
    s.seed = seed;
    s.width = width;
    s.height = height;
    std::mt19937_64 rng(splitmix64(seed ^ 0x600dULL));
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
    auto tex = [&] { return rng(); };
    using K = Primitive::Kind;
    const double back = uniform(3.6, 4.4);
    const double floor_y = uniform(1.1, 1.5);
    const double ceiling_y = -uniform(1.8, 2.2);
    const double left = -uniform(2.2, 2.8);
    const double right = uniform(2.2, 2.8);
    const double mid_y = (floor_y + ceiling_y) / 2.0;
    const double span_y = floor_y - ceiling_y;
    s.primitives.push_back({K::kPlane, {0.0, mid_y, back}, {right - left, span_y, 0.0}, tex()});
    s.primitives.push_back({K::kPlane, {0.0, floor_y, back / 2.0}, {right - left, 0.0, back + 2.0}, tex()});
    s.primitives.push_back({K::kPlane, {0.0, ceiling_y, back / 2.0}, {right - left, 0.0, back + 2.0}, tex()});
    s.primitives.push_back({K::kPlane, {left, mid_y, back / 2.0}, {0.0, span_y, back + 2.0}, tex()});
    s.primitives.push_back({K::kPlane, {right, mid_y, back / 2.0}, {0.0, span_y, back + 2.0}, tex()});
    const int boxes = 3 + static_cast<int>(uniform_below(rng, 4));
    for (int i = 0; i < boxes; ++i) {
      const Vec3 size(uniform(0.3, 0.9), uniform(0.3, 1.0), uniform(0.3, 0.9));
      const Vec3 center(uniform(-1.4, 1.4), floor_y - size.y() / 2.0, uniform(1.8, back - 0.6));
      s.primitives.push_back({K::kBox, center, size, tex()});
    }
    return s;
  }
};

namespace detail {

inline double lattice_value(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
  const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x9E3779B1ULL ^
                                                      splitmix64(static_cast<std::uint64_t>(iy))));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// Smoothly interpolated lattice noise in [0, 1].
inline double value_noise(std::uint64_t seed, double x, double y) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
  const double sx = smooth(x - fx);
  const double sy = smooth(y - fy);
  const double a = lattice_value(seed, ix, iy);
  const double b = lattice_value(seed, ix + 1, iy);
  const double c = lattice_value(seed, ix, iy + 1);
  const double d = lattice_value(seed, ix + 1, iy + 1);
  return (a + (b - a) * sx) * (1.0 - sy) + (c + (d - c) * sx) * sy;
}

inline constexpr std::array<double, 3> kOctaveFrequency{1.2, 2.4, 4.8};  // cycles per meter
inline constexpr std::array<double, 3> kOctaveAmplitude{0.55, 0.3, 0.15};

/// Albedo of a primitive at surface coordinates (s, t) of the face whose
/// normal is `axis`.
inline Vec3 texture_color(std::uint64_t seed, int axis, double s, double t) {
  std::mt19937_64 palette(splitmix64(seed));
  Vec3 base;
  for (int c = 0; c < 3; ++c) base[c] = 0.25 + 0.5 * uniform01(palette);
  Vec3 out;
  for (int c = 0; c < 3; ++c) {
    double n = 0.0;
    for (std::size_t o = 0; o < kOctaveFrequency.size(); ++o) {
      const std::uint64_t ch = splitmix64(seed + 1000003ULL * (c + 1) + 7919ULL * (axis + 1) + o);
      n += kOctaveAmplitude[o] * value_noise(ch, s * kOctaveFrequency[o], t * kOctaveFrequency[o]);
    }
    out[c] = std::clamp(base[c] + 0.9 * (n - 0.5), 0.0, 1.0);
  }
  return out;
}

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  int axis = 0;
  std::size_t primitive = 0;
};

/// Nearest positive intersection of origin + t * dir with an axis-aligned
/// primitive. Planes are zero-thickness boxes, handled by the same slab test.
inline bool intersect(const Primitive& p, const Vec3& origin, const Vec3& dir, double& t_hit,
                      int& axis_hit) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int near_axis = 0;
  for (int a = 0; a < 3; ++a) {
    const double lo = p.center[a] - p.size[a] / 2.0;
    const double hi = p.center[a] + p.size[a] / 2.0;
    if (dir[a] == 0.0) {
      if (origin[a] < lo || origin[a] > hi) return false;
      continue;
    }
    double t0 = (lo - origin[a]) / dir[a];
    double t1 = (hi - origin[a]) / dir[a];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_near) {
      t_near = t0;
      near_axis = a;
    }
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || !(t_near > 1e-9)) return false;
  t_hit = t_near;
  axis_hit = near_axis;
  return true;
}

inline double gaussian(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace detail

/// Ray-casts one view of the scene from `pose` (camera to world). Depth is the
/// camera-frame z of the nearest intersection; pixels that hit nothing have
/// missing depth and black color.
inline RGBDFrame render_scene(const SceneSpec& spec, const RigidTransform& pose,
                              std::uint64_t noise_stream) {
  const CameraIntrinsics k = spec.intrinsics();
  ColorImage color(k.width(), k.height(), 3, 0.0f);
  Image<double> depth(k.width(), k.height(), 1, 0.0);
  std::mt19937_64 noise(splitmix64(spec.seed ^ noise_stream));
  const Vec3 origin = pose.translation();
  for (int v = 0; v < k.height(); ++v) {
    for (int u = 0; u < k.width(); ++u) {
      const Vec3 dir = pose.rotation() * k.unproject(u, v, 1.0);
      detail::Hit best;
      for (std::size_t i = 0; i < spec.primitives.size(); ++i) {
        double t;
        int axis;
        if (detail::intersect(spec.primitives[i], origin, dir, t, axis) && t < best.t) {
          best = {t, axis, i};
        }
      }
      // Noise draws happen for every pixel so streams stay aligned.
      const double jitter = spec.depth_noise_sigma > 0.0 ? detail::gaussian(noise) : 0.0;
      const bool dropped = spec.depth_dropout > 0.0 && uniform01(noise) < spec.depth_dropout;
      if (!std::isfinite(best.t)) continue;
      const Vec3 x = origin + best.t * dir;
      const int s_axis = (best.axis + 1) % 3;
      const int t_axis = (best.axis + 2) % 3;
      const Vec3 c = detail::texture_color(spec.primitives[best.primitive].texture_seed, best.axis,
                                           x[s_axis], x[t_axis]);
      for (int ch = 0; ch < 3; ++ch) color.at(u, v, ch) = static_cast<float>(c[ch]);
      const double d = best.t + spec.depth_noise_sigma * jitter;
      if (!dropped && d > 0.0) depth.at(u, v) = d;
    }
  }
  return RGBDFrame(std::move(color), DepthMap(std::move(depth)), k);
}

struct FramePair {
  RGBDFrame frame0;
  RGBDFrame frame1;
  /// Maps frame-0 camera coordinates into frame-1 camera coordinates.
  std::optional<RigidTransform> relative;
  std::optional<RigidTransform> pose0;
  std::optional<RigidTransform> pose1;
};

/// Camera-0-to-camera-1 perturbation drawn from the spec.
inline RigidTransform perturbation(const SceneSpec& spec) {
  std::mt19937_64 rng(splitmix64(spec.seed ^ 0xa11ce));
  auto random_unit = [&] {
    Vec3 v;
    do {
      v = {detail::gaussian(rng), detail::gaussian(rng), detail::gaussian(rng)};
    } while (v.norm() < 1e-6);
    return Vec3(v.normalized());
  };
  const Vec3 axis = spec.rotation_axis.norm() > 0.0 ? Vec3(spec.rotation_axis.normalized()) : random_unit();
  const Vec3 dir = spec.translation_direction.norm() > 0.0
                       ? Vec3(spec.translation_direction.normalized())
                       : random_unit();
  return RigidTransform::from_axis_angle(axis, spec.rotation_deg * std::numbers::pi / 180.0,
                                         spec.translation_m * dir);
}

/// Two views of the scene; the second camera sits at base_pose * perturbation.
inline FramePair generate_pair(const SceneSpec& spec) {
  const RigidTransform pose0 = spec.base_pose;
  const RigidTransform pose1 = pose0 * perturbation(spec);
  FramePair pair{render_scene(spec, pose0, 0), render_scene(spec, pose1, 1),
                 pose1.inverse() * pose0, pose0, pose1};
  for (const RGBDFrame* f : {&pair.frame0, &pair.frame1}) {
    const double coverage =
        static_cast<double>(f->depth().valid_count()) / (f->width() * f->height());
    if (coverage < kMinDepthCoverage) {
      std::ostringstream os;
      os << "generated frame has " << coverage * 100.0
         << "% depth coverage (need 30%); reduce the perturbation or dropout, or move the "
            "primitives into view";
      throw InputError(os.str());
    }
  }
  return pair;
}

namespace io {

/// Pair directory: `0/` and `1/` frame directories, each optionally with
/// `pose.txt` (camera to world).
inline void write_pair(const fs::path& dir, const FramePair& pair) {
  write_frame(dir / "0", pair.frame0);
  write_frame(dir / "1", pair.frame1);
  if (pair.pose0 && pair.pose1) {
    write_pose(dir / "0" / "pose.txt", *pair.pose0);
    write_pose(dir / "1" / "pose.txt", *pair.pose1);
  }
}

inline FramePair load_pair(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("pair directory " + dir.string() + " not found");
  FramePair pair{read_frame(dir / "0"), read_frame(dir / "1"), {}, {}, {}};
  const fs::path p0 = dir / "0" / "pose.txt";
  const fs::path p1 = dir / "1" / "pose.txt";
  if (fs::exists(p0) && fs::exists(p1)) {
    pair.pose0 = read_pose(p0);
    pair.pose1 = read_pose(p1);
    pair.relative = pair.pose1->inverse() * *pair.pose0;
  }
  return pair;
}

}  // namespace io

}  // namespace rgbdreg
