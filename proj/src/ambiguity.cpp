#include "shapecomp/ambiguity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include "shapecomp/io.hpp"

namespace shapecomp {

namespace {

// Sphere around the object axis containing every rotated copy.
void axis_bounds(const ObjectSpec& spec, const RigidTransform& pose, double jitter, Vec3& center, double& radius) {
  center = pose.apply(Vec3(0.0, 0.0, 0.5 * spec.height()));
  radius = std::hypot(spec.reach() + jitter, 0.5 * spec.height()) * 1.02;
}

}  // namespace

ViewSignature signature(const ObjectSpec& spec, const RigidTransform& pose, const CameraModel& cam,
                        const SignatureParams& params) {
  if (params.size < 4) throw std::invalid_argument("signature: size must be >= 4");
  Vec3 center;
  double radius = 0.0;
  axis_bounds(spec, pose, 0.0, center, radius);
  const double dist = (cam.position - center).norm();
  const double half_fov = dist > radius ? std::min(1.1 * std::asin(radius / dist), 1.4) : 1.4;
  CameraModel c = cam.with_resolution(params.size, half_fov);
  c.target = center;
  const DepthNormalImage img = render(spec, pose, c);
  return {img.width, img.height, img.depth};
}

double similarity(const ViewSignature& a, const ViewSignature& b, double depth_scale) {
  if (a.width != b.width || a.height != b.height) throw std::invalid_argument("similarity: size mismatch");
  if (depth_scale <= 0) throw std::invalid_argument("similarity: depth_scale must be > 0");
  std::size_t n = 0;
  double diff = 0.0;
  for (std::size_t px = 0; px < a.depth.size(); ++px) {
    const bool va = a.valid(px), vb = b.valid(px);
    if (!va && !vb) continue;
    ++n;
    if (va && vb)
      diff += std::min(std::abs(a.depth[px] - b.depth[px]), depth_scale) / depth_scale;
    else
      diff += 1.0;
  }
  return n == 0 ? 1.0 : 1.0 - diff / static_cast<double>(n);
}

AmbiguousPoseSet find_ambiguous_poses(const ObjectSpec& spec, const RigidTransform& pose, const CameraModel& cam,
                                      const CandidateSampler& sampler, const AmbiguityParams& params) {
  if (params.n_samples < 1) throw std::invalid_argument("find_ambiguous_poses: n_samples must be >= 1");
  AmbiguousPoseSet out;
  out.threshold = params.theta_sim;
  const ViewSignature observed = signature(spec, pose, cam, params.signature);
  for (int k = 0; k < params.n_samples; ++k) {
    const RigidTransform T = sampler(k, params.n_samples);
    if (k == 0 && ((T.rotation - Mat3::Identity()).norm() > 1e-12 || T.translation.norm() > 1e-12))
      throw std::invalid_argument("find_ambiguous_poses: candidate 0 must be the identity");
    double score = 1.0;
    if (k > 0) score = similarity(observed, signature(spec, T.compose(pose), cam, params.signature),
                                  params.signature.depth_scale);
    if (k == 0 || score >= params.theta_sim) {
      out.transforms.push_back(T);
      out.scores.push_back(score);
      out.angles.push_back(std::atan2(T.rotation(1, 0), T.rotation(0, 0)));
    }
  }
  return out;
}

AmbiguousPoseSet find_ambiguous_poses(const ObjectSpec& spec, const RigidTransform& pose, const CameraModel& cam,
                                      std::uint64_t seed, const AmbiguityParams& params) {
  const Vec3 pivot = pose.translation;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double jitter = params.translation_jitter;
  CandidateSampler sampler = [&](int k, int n) {
    if (k == 0) return RigidTransform::identity();
    RigidTransform T = RigidTransform::rotation_z(2.0 * std::numbers::pi * k / n, pivot);
    if (jitter > 0) {
      const double dx = jitter * u(rng), dy = jitter * u(rng);
      T.translation += Vec3(dx, dy, 0.0);
    }
    return T;
  };
  return find_ambiguous_poses(spec, pose, cam, sampler, params);
}

PoseRegions pose_regions(const ObjectSpec& spec, const RigidTransform& pose, const AmbiguousPoseSet& poses,
                         const GridSpec& grid) {
  PoseRegions out{Region3(grid), Region3(grid)};
  if (poses.transforms.empty()) {
    out.certain = voxelize(spec, pose, grid);
    out.certain.relabel();
    out.uncertain.relabel();
    return out;
  }
  std::vector<std::uint16_t> counts(grid.node_count(), 0);
  for (const auto& T : poses.transforms) {
    const Region3 r = voxelize(spec, T.compose(pose), grid);
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] = static_cast<std::uint16_t>(counts[i] + r.mask[i]);
  }
  const auto total = static_cast<std::uint16_t>(poses.transforms.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    out.certain.mask[i] = counts[i] == total ? 1 : 0;
    out.uncertain.mask[i] = (counts[i] > 0 && counts[i] < total) ? 1 : 0;
  }
  out.certain.relabel();
  out.uncertain.relabel();
  return out;
}

Region3 uncertain_region(const ObjectSpec& spec, const RigidTransform& pose, const AmbiguousPoseSet& poses,
                         const GridSpec& grid) {
  return pose_regions(spec, pose, poses, grid).uncertain;
}

void write_pose_set(const AmbiguousPoseSet& poses, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# angle score r00 r01 r02 tx r10 r11 r12 ty r20 r21 r22 tz\n";
  for (std::size_t i = 0; i < poses.transforms.size(); ++i) {
    out << format_double(poses.angles[i]) << ' ' << format_double(poses.scores[i]);
    for (double v : poses.transforms[i].rows()) out << ' ' << format_double(v);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace shapecomp
