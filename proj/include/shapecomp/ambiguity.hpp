#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "shapecomp/grid.hpp"
#include "shapecomp/object.hpp"
#include "shapecomp/synthdata.hpp"

namespace shapecomp {

/// Low-resolution depth render used to compare views.
struct ViewSignature {
  int width = 0;
  int height = 0;
  std::vector<double> depth;  // 0 where the ray misses

  bool valid(std::size_t px) const { return depth[px] > 0.0; }
};

struct SignatureParams {
  int size = 64;
  /// Per-pixel depth differences saturate at this value (meters).
  double depth_scale = 0.005;
};

/// Renders the posed object from `cam`'s viewpoint, framed so that any
/// rotation of the object about its axis stays inside the image.
ViewSignature signature(const ObjectSpec& spec, const RigidTransform& pose, const CameraModel& cam,
                        const SignatureParams& params = {});

/// 1 - mean over the union mask of min(|Δdepth|, scale) / scale, where a pixel
/// valid in only one image counts as a full-scale difference.
double similarity(const ViewSignature& a, const ViewSignature& b, double depth_scale = 0.005);

struct AmbiguousPoseSet {
  /// World transforms T applied on top of the true pose (T ∘ pose); the first is identity.
  std::vector<RigidTransform> transforms;
  std::vector<double> scores;
  double threshold = 0.98;
  /// Rotation angle about the object axis for each accepted transform.
  std::vector<double> angles;
};

/// Produces candidate world transforms for index k of n.
using CandidateSampler = std::function<RigidTransform(int k, int n)>;

struct AmbiguityParams {
  int n_samples = 72;
  double theta_sim = 0.98;
  double translation_jitter = 0.0;
  SignatureParams signature;
};

/// Candidate rotations about the world z axis through the object origin at
/// 2πk/n, optionally with a horizontal translation jitter, kept when their
/// view signature matches the observed one.
AmbiguousPoseSet find_ambiguous_poses(const ObjectSpec& spec, const RigidTransform& pose, const CameraModel& cam,
                                      std::uint64_t seed, const AmbiguityParams& params = {});
/// Same acceptance test over caller-supplied candidates; candidate 0 must be identity.
AmbiguousPoseSet find_ambiguous_poses(const ObjectSpec& spec, const RigidTransform& pose, const CameraModel& cam,
                                      const CandidateSampler& sampler, const AmbiguityParams& params);

struct PoseRegions {
  Region3 uncertain;  // union \ intersection
  Region3 certain;    // intersection
};

/// Set-theoretic split of the occupancy over all accepted poses.
PoseRegions pose_regions(const ObjectSpec& spec, const RigidTransform& pose, const AmbiguousPoseSet& poses,
                         const GridSpec& grid);
Region3 uncertain_region(const ObjectSpec& spec, const RigidTransform& pose, const AmbiguousPoseSet& poses,
                         const GridSpec& grid);

void write_pose_set(const AmbiguousPoseSet& poses, const std::filesystem::path& path);

}  // namespace shapecomp
