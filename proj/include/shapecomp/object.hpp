#pragma once

#include <cstdint>

#include "shapecomp/grid.hpp"
#include "shapecomp/types.hpp"

namespace shapecomp {

/// Parametric mug: a hollow capped cylinder (open top) standing on z = 0 with
/// its axis on z, plus an optional handle shaped as a half torus attached to
/// the outer wall at `handle_azimuth`.
///
/// Lengths are in the unscaled object frame; the effective geometry is
/// obtained by multiplying all lengths by `global_scale` and heights by the
/// extra `z_scale` factor.
struct ObjectSpec {
  double body_radius = 0.45;
  double body_height = 1.0;
  double wall_thickness = 0.1;
  bool handle_present = true;
  double handle_tube_radius = 0.07;
  double handle_loop_radius = 0.22;
  double handle_azimuth = 0.0;
  double global_scale = 1.0;
  double z_scale = 1.0;

  bool is_valid() const;

  // Effective (scaled) dimensions.
  double radius() const { return body_radius * global_scale; }
  double height() const { return body_height * global_scale * z_scale; }
  double wall() const { return wall_thickness * global_scale; }
  double tube() const { return handle_tube_radius * global_scale; }
  double loop() const { return handle_loop_radius * global_scale; }
  /// Largest horizontal distance from the axis reached by the material.
  double reach() const;
  /// Largest side of the object-frame bounding box.
  double max_extent() const;
  /// Object-frame bounding box.
  Box3 bounds() const;
};

/// Signed distance in the object frame: negative inside material.
double sdf_object(const ObjectSpec& spec, const Vec3& p);
/// Signed distance of the object placed by `pose` (object -> world).
double sdf_object(const ObjectSpec& spec, const RigidTransform& pose, const Vec3& world_p);

double sdf_body(const ObjectSpec& spec, const Vec3& p);
/// Handle distance; a Lipschitz-bounded approximation when z_scale != 1.
double sdf_handle(const ObjectSpec& spec, const Vec3& p);

/// Central-difference gradient of the object-frame SDF, normalized.
Vec3 sdf_normal(const ObjectSpec& spec, const Vec3& p, double h = 1e-6);

/// Random unscaled mug proportions with the handle at azimuth 0.
ObjectSpec random_object_spec(std::uint64_t seed);

/// Occupancy of the posed object at every node of `grid` (sdf < 0).
Region3 voxelize(const ObjectSpec& spec, const RigidTransform& pose, const GridSpec& grid);
/// Handle-only occupancy outside the body.
Region3 voxelize_handle(const ObjectSpec& spec, const RigidTransform& pose, const GridSpec& grid);

}  // namespace shapecomp
