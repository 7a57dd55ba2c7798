#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "shapecomp/grid.hpp"
#include "shapecomp/mesh.hpp"
#include "shapecomp/object.hpp"
#include "shapecomp/types.hpp"

namespace shapecomp {

/// Parallel-jaw gripper. Gripper frame: x closes the jaws, z is the approach
/// direction (fingers point along +z), origin midway between the contacts.
struct GripperGeometry {
  Vec3 finger{0.02, 0.02, 0.06};  // x, y, z extents
  Vec3 palm{0.08, 0.03, 0.03};
  double max_span = 0.08;
  /// Gap left between each finger and its contact.
  double clearance = 0.005;
  /// How far the fingertips reach past the contact plane.
  double tip_depth = 0.01;
};

struct OrientedBox {
  RigidTransform pose;  // box frame -> world, box centred at its origin
  Vec3 half = Vec3::Zero();

  /// Inclusive of the faces, with 1e-12 slack.
  bool contains(const Vec3& world_p) const;
  Box3 world_bounds() const;
};

struct GraspCandidate {
  RigidTransform pose;  // gripper -> world
  double jaw_span = 0.0;
  std::array<Vec3, 2> contacts{Vec3::Zero(), Vec3::Zero()};
  bool blocked = false;

  /// Two fingers and the palm.
  std::array<OrientedBox, 3> swept_volume(const GripperGeometry& g) const;
};

struct GraspSampling {
  GripperGeometry gripper;
  /// Opposing-normal test for contact pairs.
  double antipodal_dot = -0.8;
  /// Surface samples tried per requested grasp before giving up.
  int attempts_per_grasp = 20;
  /// Candidates whose swept volume contains a voxel of this region are
  /// rejected, e.g. the predicted occupied region the mesh was built from.
  const Region3* obstacle = nullptr;
  /// Swept boxes are grown by this many obstacle voxel spacings for the
  /// rejection test; 0.5 treats each voxel as its full cell.
  double obstacle_margin = 0.5;
};

/// Antipodal candidates on `mesh`; empty when no surface pair fits the jaws.
std::vector<GraspCandidate> sample_grasps(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed,
                                          const GraspSampling& params = {});

/// `margin` grows every swept box by that distance on each side.
bool intersects_region(const GraspCandidate& g, const Region3& region, const GripperGeometry& gripper = {},
                       double margin = 0.0);

struct FilterResult {
  std::vector<GraspCandidate> kept;
  std::size_t removed = 0;
  /// Every candidate was blocked.
  bool failure = false;
};

FilterResult filter_grasps(std::span<const GraspCandidate> candidates, const Region3& region,
                           const GripperGeometry& gripper = {});

/// True when a probe point of the swept volume lies inside the object.
bool collides(const GraspCandidate& g, const ObjectSpec& spec, const RigidTransform& pose,
              const GripperGeometry& gripper = {}, double pitch = 0.005);

/// Fraction of candidates colliding with the ground-truth object.
double collision_rate(std::span<const GraspCandidate> candidates, const ObjectSpec& spec, const RigidTransform& pose,
                      const GripperGeometry& gripper = {}, double pitch = 0.005);

/// One row per grasp: 12 row-major [R|t] numbers, jaw span, blocked flag.
void write_grasps(std::span<const GraspCandidate> grasps, const std::filesystem::path& path);
std::vector<GraspCandidate> read_grasps(const std::filesystem::path& path);

}  // namespace shapecomp
