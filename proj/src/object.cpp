#include "shapecomp/object.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

namespace shapecomp {

bool ObjectSpec::is_valid() const {
  const bool lengths = body_radius > 0 && body_height > 0 && wall_thickness > 0 && global_scale > 0 && z_scale > 0;
  if (!lengths || wall_thickness >= body_radius || 2 * wall_thickness >= body_height) return false;
  if (handle_present) {
    if (handle_tube_radius <= 0 || handle_loop_radius <= handle_tube_radius) return false;
    if (handle_loop_radius + handle_tube_radius > 0.5 * body_height) return false;
  }
  return true;
}

double ObjectSpec::reach() const { return handle_present ? radius() + loop() + tube() : radius(); }

Box3 ObjectSpec::bounds() const {
  const double R = radius();
  Box3 b{Vec3(-R, -R, 0.0), Vec3(R, R, height())};
  if (!handle_present) return b;
  const double zc = 0.5 * height();
  const double half_h = (loop() + tube()) * z_scale;
  const double c = std::cos(handle_azimuth), s = std::sin(handle_azimuth);
  for (double u : {R - tube(), reach()}) {
    for (double v : {-tube(), tube()}) {
      const Vec3 lo(c * u - s * v, s * u + c * v, zc - half_h);
      const Vec3 hi(lo.x(), lo.y(), zc + half_h);
      b.lo = b.lo.cwiseMin(lo);
      b.hi = b.hi.cwiseMax(hi);
    }
  }
  return b;
}

double ObjectSpec::max_extent() const { return bounds().extent().maxCoeff(); }

namespace {

using Vec2 = Eigen::Vector2d;

// Exact signed distance to a simple polygon (even-odd sign).
template <std::size_t N>
double polygon_sdf(const std::array<Vec2, N>& v, const Vec2& p) {
  double d = (p - v[0]).squaredNorm();
  bool inside = false;
  for (std::size_t i = 0, j = N - 1; i < N; j = i, ++i) {
    const Vec2 e = v[j] - v[i];
    const Vec2 w = p - v[i];
    const double t = std::clamp(w.dot(e) / e.squaredNorm(), 0.0, 1.0);
    d = std::min(d, (w - e * t).squaredNorm());
    const bool c1 = p.y() >= v[i].y(), c2 = p.y() < v[j].y();
    const double cross = e.x() * w.y() - e.y() * w.x();
    if ((c1 && c2 && cross > 0) || (!c1 && !c2 && cross < 0)) inside = !inside;
  }
  return inside ? -std::sqrt(d) : std::sqrt(d);
}

}  // namespace

double sdf_body(const ObjectSpec& spec, const Vec3& p) {
  const double R = spec.radius(), H = spec.height(), w = spec.wall();
  const double Ri = R - w;
  // Axial cross-section of the cup (both sides of the axis), counter-clockwise.
  const std::array<Vec2, 8> section{Vec2(-R, 0), Vec2(R, 0),   Vec2(R, H),   Vec2(Ri, H),
                                    Vec2(Ri, w), Vec2(-Ri, w), Vec2(-Ri, H), Vec2(-R, H)};
  const double r = std::hypot(p.x(), p.y());
  return polygon_sdf(section, Vec2(r, p.z()));
}

double sdf_handle(const ObjectSpec& spec, const Vec3& p) {
  const double c = std::cos(spec.handle_azimuth), s = std::sin(spec.handle_azimuth);
  const double u = c * p.x() + s * p.y() - spec.radius();
  const double v = -s * p.x() + c * p.y();
  const double w = (p.z() - 0.5 * spec.height()) / spec.z_scale;
  const double a = spec.loop();
  double d;
  if (u >= 0.0) {
    const double ring = std::hypot(u, w) - a;
    d = std::hypot(ring, v);
  } else {
    d = std::sqrt(u * u + v * v + (std::abs(w) - a) * (std::abs(w) - a));
  }
  return (d - spec.tube()) * std::min(1.0, spec.z_scale);
}

double sdf_object(const ObjectSpec& spec, const Vec3& p) {
  const double body = sdf_body(spec, p);
  if (!spec.handle_present) return body;
  return std::min(body, sdf_handle(spec, p));
}

double sdf_object(const ObjectSpec& spec, const RigidTransform& pose, const Vec3& world_p) {
  return sdf_object(spec, pose.rotation.transpose() * (world_p - pose.translation));
}

Vec3 sdf_normal(const ObjectSpec& spec, const Vec3& p, double h) {
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 dp = Vec3::Zero();
    dp[a] = h;
    g[a] = sdf_object(spec, p + dp) - sdf_object(spec, p - dp);
  }
  const double n = g.norm();
  return n > 0 ? Vec3(g / n) : Vec3::UnitZ();
}

ObjectSpec random_object_spec(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  ObjectSpec s;
  s.body_radius = uni(0.4, 0.5);
  s.body_height = uni(0.8, 1.2);
  s.wall_thickness = s.body_radius * uni(0.18, 0.26);
  s.handle_present = true;
  s.handle_tube_radius = s.body_radius * uni(0.13, 0.18);
  s.handle_loop_radius = std::min(s.body_radius * uni(0.40, 0.55), 0.45 * s.body_height - s.handle_tube_radius);
  s.handle_azimuth = 0.0;
  return s;
}

namespace {

template <typename Pred>
Region3 voxelize_impl(const ObjectSpec& spec, const RigidTransform& pose, const GridSpec& grid, Pred pred) {
  Region3 region(grid);
  const RigidTransform inv = pose.inverse();
  const double reach = spec.reach() + grid.spacing;
  const double top = spec.height() + grid.spacing;
  for (std::size_t n = 0; n < grid.node_count(); ++n) {
    const Vec3 q = inv.apply(grid.position(n));
    if (q.z() < -grid.spacing || q.z() > top || q.head<2>().squaredNorm() > reach * reach) continue;
    region.mask[n] = pred(q) ? 1 : 0;
  }
  region.relabel();
  return region;
}

}  // namespace

Region3 voxelize(const ObjectSpec& spec, const RigidTransform& pose, const GridSpec& grid) {
  return voxelize_impl(spec, pose, grid, [&](const Vec3& q) { return sdf_object(spec, q) < 0.0; });
}

Region3 voxelize_handle(const ObjectSpec& spec, const RigidTransform& pose, const GridSpec& grid) {
  if (!spec.handle_present) return Region3(grid);
  return voxelize_impl(spec, pose, grid,
                       [&](const Vec3& q) { return sdf_handle(spec, q) < 0.0 && sdf_body(spec, q) >= 0.0; });
}

}  // namespace shapecomp
