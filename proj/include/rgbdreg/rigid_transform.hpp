#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <sstream>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "rgbdreg/error.hpp"

namespace rgbdreg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Tolerance for the orthonormality and determinant checks on construction.
inline constexpr double kRotationTolerance = 1e-9;

/// Element of SE(3): x -> rotation * x + translation.
///
/// The rotation is validated, never re-orthonormalized: a solver that emits a
/// non-rotation should fail loudly rather than be silently repaired.
class RigidTransform {
 public:
  RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

  RigidTransform(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {
    check(kRotationTolerance);
  }

  static RigidTransform identity() { return {}; }

  /// Rotation of `angle_rad` about `axis` (need not be unit), then translation.
  static RigidTransform from_axis_angle(const Vec3& axis, double angle_rad,
                                        const Vec3& translation = Vec3::Zero()) {
    RigidTransform t;
    t.rotation_ = Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
    t.translation_ = translation;
    return t;
  }

  /// Builds a transform from a near-rotation read from a file. The input must be
  /// within `tolerance` of a rotation; it is then projected onto SO(3).
  static RigidTransform from_approximate(const Mat3& rotation, const Vec3& translation,
                                         double tolerance) {
    RigidTransform t;
    t.rotation_ = rotation;
    t.translation_ = translation;
    t.check(tolerance);
    Eigen::JacobiSVD<Mat3> svd(rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
    t.rotation_ = svd.matrixU() * svd.matrixV().transpose();
    return t;
  }

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 operator()(const Vec3& x) const { return rotation_ * x + translation_; }

  /// (*this) applied after `rhs`.
  RigidTransform operator*(const RigidTransform& rhs) const {
    RigidTransform t;
    t.rotation_ = rotation_ * rhs.rotation_;
    t.translation_ = rotation_ * rhs.translation_ + translation_;
    return t;
  }

  RigidTransform inverse() const {
    RigidTransform t;
    t.rotation_ = rotation_.transpose();
    t.translation_ = -(t.rotation_ * translation_);
    return t;
  }

  /// Rotation angle in radians, in [0, pi].
  double angle() const {
    const double c = std::clamp((rotation_.trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c);
  }

  Eigen::Matrix<double, 3, 4> matrix3x4() const {
    Eigen::Matrix<double, 3, 4> m;
    m.leftCols<3>() = rotation_;
    m.col(3) = translation_;
    return m;
  }

 private:
  void check(double tolerance) const {
    if (!rotation_.allFinite() || !translation_.allFinite()) {
      throw InputError("rigid transform has non-finite entries");
    }
    const Mat3 gram = rotation_.transpose() * rotation_;
    const double ortho_err = (gram - Mat3::Identity()).cwiseAbs().maxCoeff();
    const double det_err = std::abs(rotation_.determinant() - 1.0);
    if (ortho_err > tolerance || det_err > tolerance) {
      std::ostringstream os;
      os << "matrix is not a proper rotation (orthonormality error " << ortho_err
         << ", determinant error " << det_err << ")";
      throw InputError(os.str());
    }
  }

  Mat3 rotation_;
  Vec3 translation_;
};

inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) { return a * b; }

inline RigidTransform invert(const RigidTransform& t) { return t.inverse(); }

inline std::vector<Vec3> transform_points(const RigidTransform& t, std::span<const Vec3> points) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(t(p));
  return out;
}

}  // namespace rgbdreg
