#include "shapecomp/types.hpp"

#include <cmath>
#include <numbers>

namespace shapecomp {

RigidTransform RigidTransform::rotation_z(double angle, const Vec3& pivot) {
  RigidTransform T;
  T.rotation = Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
  T.translation = pivot - T.rotation * pivot;
  return T;
}

RigidTransform RigidTransform::from_rows(std::span<const double, 12> rows) {
  RigidTransform T;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) T.rotation(r, c) = rows[r * 4 + c];
    T.translation[r] = rows[r * 4 + 3];
  }
  return T;
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
  RigidTransform T;
  T.rotation = rotation * other.rotation;
  T.translation = rotation * other.translation + translation;
  return T;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform T;
  T.rotation = rotation.transpose();
  T.translation = -(T.rotation * translation);
  return T;
}

std::array<double, 12> RigidTransform::rows() const {
  std::array<double, 12> out{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out[r * 4 + c] = rotation(r, c);
    out[r * 4 + 3] = translation[r];
  }
  return out;
}

bool RigidTransform::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const Mat3 gram = rotation.transpose() * rotation;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

Box3 Box3::padded(double fraction) const {
  const Vec3 pad = fraction * extent();
  return {lo - pad, hi + pad};
}

Box3 Box3::merged(const Box3& o) const { return {lo.cwiseMin(o.lo), hi.cwiseMax(o.hi)}; }

Mat3 rotation_from_uniforms(double u1, double u2, double u3) {
  const double two_pi = 2.0 * std::numbers::pi;
  const double a = std::sqrt(1.0 - u1);
  const double b = std::sqrt(u1);
  Eigen::Quaterniond q(a * std::sin(two_pi * u2), a * std::cos(two_pi * u2), b * std::sin(two_pi * u3),
                       b * std::cos(two_pi * u3));
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace shapecomp
