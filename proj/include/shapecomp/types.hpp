#pragma once

#include <array>
#include <cstdint>
#include <span>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace shapecomp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Rigid motion p -> R p + t.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform rotation_z(double angle, const Vec3& pivot = Vec3::Zero());
  /// Row-major 3x4 [R | t], the layout used by pose and grasp list files.
  static RigidTransform from_rows(std::span<const double, 12> rows);

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_direction(const Vec3& d) const { return rotation * d; }

  /// (this ∘ other)(p) == this->apply(other.apply(p))
  RigidTransform compose(const RigidTransform& other) const;
  RigidTransform inverse() const;
  std::array<double, 12> rows() const;

  /// Orthonormality and handedness within `tol`.
  bool is_valid(double tol = 1e-9) const;
};

inline Vec3 transform_apply(const RigidTransform& T, const Vec3& p) { return T.apply(p); }

/// Axis-aligned box.
struct Box3 {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  Vec3 extent() const { return hi - lo; }
  Vec3 center() const { return 0.5 * (lo + hi); }
  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  Box3 padded(double fraction) const;
  Box3 merged(const Box3& o) const;
};

/// Uniform random rotation (Shoemake quaternion method) driven by three
/// U(0,1) samples.
Mat3 rotation_from_uniforms(double u1, double u2, double u3);

}  // namespace shapecomp
