#include "shapecomp/grasping.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "shapecomp/io.hpp"

namespace shapecomp {

bool OrientedBox::contains(const Vec3& world_p) const {
  const Vec3 local = pose.rotation.transpose() * (world_p - pose.translation);
  return (local.cwiseAbs().array() <= half.array() + 1e-12).all();
}

Box3 OrientedBox::world_bounds() const {
  const Vec3 r = pose.rotation.cwiseAbs() * half;
  return {pose.translation - r, pose.translation + r};
}

std::array<OrientedBox, 3> GraspCandidate::swept_volume(const GripperGeometry& g) const {
  const double finger_x = 0.5 * jaw_span + 0.5 * g.finger.x();
  const double finger_z = g.tip_depth - 0.5 * g.finger.z();
  const double palm_z = g.tip_depth - g.finger.z() - 0.5 * g.palm.z();
  auto box = [&](const Vec3& center, const Vec3& size) {
    OrientedBox b;
    b.pose.rotation = pose.rotation;
    b.pose.translation = pose.apply(center);
    b.half = 0.5 * size;
    return b;
  };
  return {box(Vec3(-finger_x, 0, finger_z), g.finger), box(Vec3(finger_x, 0, finger_z), g.finger),
          box(Vec3(0, 0, palm_z), g.palm)};
}

namespace {

// Möller-Trumbore; returns the nearest hit distance > t_min along dir.
bool ray_mesh(const TriangleMesh& mesh, const Vec3& origin, const Vec3& dir, double t_min, double t_max, double& t_hit,
              std::size_t& tri_hit) {
  bool hit = false;
  t_hit = t_max;
  for (std::size_t f = 0; f < mesh.triangles.size(); ++f) {
    const auto& tri = mesh.triangles[f];
    const Vec3& a = mesh.vertices[tri[0]];
    const Vec3 e1 = mesh.vertices[tri[1]] - a;
    const Vec3 e2 = mesh.vertices[tri[2]] - a;
    const Vec3 pv = dir.cross(e2);
    const double det = e1.dot(pv);
    if (std::abs(det) < 1e-18) continue;
    const double inv = 1.0 / det;
    const Vec3 tv = origin - a;
    const double u = tv.dot(pv) * inv;
    if (u < 0.0 || u > 1.0) continue;
    const Vec3 qv = tv.cross(e1);
    const double v = dir.dot(qv) * inv;
    if (v < 0.0 || u + v > 1.0) continue;
    const double t = e2.dot(qv) * inv;
    if (t > t_min && t < t_hit) {
      t_hit = t;
      tri_hit = f;
      hit = true;
    }
  }
  return hit;
}

}  // namespace

std::vector<GraspCandidate> sample_grasps(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed,
                                          const GraspSampling& params) {
  if (mesh.triangles.empty()) throw std::invalid_argument("sample_grasps: empty mesh");
  if (n == 0) throw std::invalid_argument("sample_grasps: n must be > 0");
  const auto& g = params.gripper;
  const double max_contact = g.max_span - 2.0 * g.clearance;
  std::vector<GraspCandidate> out;
  if (max_contact <= 0.0) return out;

  const std::size_t attempts = n * static_cast<std::size_t>(std::max(params.attempts_per_grasp, 1));
  const SurfaceSample surf = sample_surface(mesh, attempts, seed);
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ull);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);

  for (std::size_t i = 0; i < attempts && out.size() < n; ++i) {
    const Vec3& p = surf.points[i];
    const Vec3 np = surf.normals[i].normalized();
    double t = 0.0;
    std::size_t f = 0;
    if (!ray_mesh(mesh, p, -np, 1e-6, max_contact, t, f)) continue;
    const Vec3 nq = mesh.normal(f).normalized();
    if (np.dot(nq) >= params.antipodal_dot) continue;
    const Vec3 q = p - t * np;
    const Vec3 x = (q - p).normalized();
    // Approach direction uniformly around the closing axis.
    Vec3 a = x.unitOrthogonal();
    const Vec3 b = x.cross(a);
    const double phi = angle(rng);
    const Vec3 z = std::cos(phi) * a + std::sin(phi) * b;
    GraspCandidate c;
    c.pose.rotation.col(0) = x;
    c.pose.rotation.col(1) = z.cross(x);
    c.pose.rotation.col(2) = z;
    c.pose.translation = 0.5 * (p + q);
    c.jaw_span = t + 2.0 * g.clearance;
    c.contacts = {p, q};
    if (params.obstacle &&
        intersects_region(c, *params.obstacle, g, params.obstacle_margin * params.obstacle->spec.spacing))
      continue;
    out.push_back(c);
  }
  return out;
}

bool intersects_region(const GraspCandidate& grasp, const Region3& region, const GripperGeometry& gripper,
                       double margin) {
  const GridSpec& s = region.spec;
  for (OrientedBox box : grasp.swept_volume(gripper)) {
    box.half.array() += margin;
    const Box3 wb = box.world_bounds();
    std::array<int, 3> lo{}, hi{};
    bool empty = false;
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(0, static_cast<int>(std::ceil((wb.lo[a] - s.origin[a]) / s.spacing - 1e-9)));
      hi[a] = std::min(s.dims[a] - 1, static_cast<int>(std::floor((wb.hi[a] - s.origin[a]) / s.spacing + 1e-9)));
      if (lo[a] > hi[a]) empty = true;
    }
    if (empty) continue;
    for (int k = lo[2]; k <= hi[2]; ++k)
      for (int j = lo[1]; j <= hi[1]; ++j)
        for (int i = lo[0]; i <= hi[0]; ++i) {
          const std::size_t idx = s.index(i, j, k);
          if (region.mask[idx] && box.contains(s.position(i, j, k))) return true;
        }
  }
  return false;
}

FilterResult filter_grasps(std::span<const GraspCandidate> candidates, const Region3& region,
                           const GripperGeometry& gripper) {
  FilterResult r;
  for (const auto& c : candidates) {
    if (intersects_region(c, region, gripper))
      ++r.removed;
    else
      r.kept.push_back(c);
  }
  r.failure = !candidates.empty() && r.kept.empty();
  return r;
}

bool collides(const GraspCandidate& g, const ObjectSpec& spec, const RigidTransform& pose,
              const GripperGeometry& gripper, double pitch) {
  if (!(pitch > 0)) throw std::invalid_argument("collides: pitch must be > 0");
  for (const OrientedBox& box : g.swept_volume(gripper)) {
    std::array<int, 3> n{};
    for (int a = 0; a < 3; ++a) n[a] = static_cast<int>(std::ceil(2.0 * box.half[a] / pitch - 1e-9)) + 1;
    for (int k = 0; k < n[2]; ++k)
      for (int j = 0; j < n[1]; ++j)
        for (int i = 0; i < n[0]; ++i) {
          Vec3 local;
          const int idx[3] = {i, j, k};
          for (int a = 0; a < 3; ++a)
            local[a] = n[a] == 1 ? 0.0 : -box.half[a] + 2.0 * box.half[a] * idx[a] / (n[a] - 1);
          if (sdf_object(spec, pose, box.pose.apply(local)) < 0.0) return true;
        }
  }
  return false;
}

double collision_rate(std::span<const GraspCandidate> candidates, const ObjectSpec& spec, const RigidTransform& pose,
                      const GripperGeometry& gripper, double pitch) {
  if (candidates.empty()) throw std::invalid_argument("collision_rate: no candidates");
  std::size_t hits = 0;
  for (const auto& c : candidates) hits += collides(c, spec, pose, gripper, pitch) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(candidates.size());
}

void write_grasps(std::span<const GraspCandidate> grasps, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& g : grasps) {
    for (double v : g.pose.rows()) out << format_double(v) << ' ';
    out << format_double(g.jaw_span) << ' ' << (g.blocked ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<GraspCandidate> read_grasps(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<GraspCandidate> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto tok = split(trim(line), ' ');
    if (tok.size() == 1 && tok[0].empty()) continue;
    if (tok.size() != 14) throw IoError("bad grasp row in " + path.string());
    std::array<double, 12> rows{};
    for (int i = 0; i < 12; ++i) rows[static_cast<std::size_t>(i)] = parse_double(tok[static_cast<std::size_t>(i)]);
    GraspCandidate g;
    g.pose = RigidTransform::from_rows(rows);
    g.jaw_span = parse_double(tok[12]);
    g.blocked = parse_int(tok[13]) != 0;
    const Vec3 x = g.pose.rotation.col(0);
    g.contacts = {g.pose.translation - 0.5 * (g.jaw_span) * x, g.pose.translation + 0.5 * g.jaw_span * x};
    out.push_back(g);
  }
  return out;
}

}  // namespace shapecomp
