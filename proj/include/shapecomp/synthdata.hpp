#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "shapecomp/grid.hpp"
#include "shapecomp/object.hpp"
#include "shapecomp/types.hpp"

namespace shapecomp {

/// Pinhole camera; camera frame is x right, y down, z forward.
struct CameraModel {
  Vec3 position = Vec3(0, 0, 1);
  Vec3 target = Vec3::Zero();
  Vec3 up = Vec3::UnitZ();
  double focal_px = 200.0;
  int width = 128;
  int height = 128;

  bool is_valid() const;
  RigidTransform camera_to_world() const;
  /// Same viewpoint, resampled to a `size` x `size` image covering a cone of
  /// half-angle `half_fov` radians.
  CameraModel with_resolution(int size, double half_fov) const;
  Vec3 ray_direction(double u, double v) const;  // camera frame, z = 1
};

struct DepthNormalImage {
  int width = 0;
  int height = 0;
  std::vector<double> depth;   // z-depth in meters, 0 = miss
  std::vector<Vec3> normals;   // camera frame

  std::size_t hit_count() const;
};

enum class Frame { camera, robot_world };

struct OrientedPointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  Frame frame = Frame::camera;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

struct CameraSampling {
  double min_distance = 0.3;
  double max_distance = 0.6;
  double focal_px = 225.0;
  int image_size = 200;
};

/// Camera on the upper hemisphere around `target`, looking at it.
CameraModel sample_camera(std::uint64_t seed, const Vec3& target = Vec3::Zero(), const CameraSampling& opts = {});

struct ScaleRange {
  double min_extent = 0.05;
  double max_extent = 0.15;
  double min_z = 0.8;
  double max_z = 1.2;
};

/// Rescales so that the largest bounding-box side is U(0.05, 0.15) m after an
/// extra U(0.8, 1.2) stretch along z.
ObjectSpec scale_object(const ObjectSpec& spec, std::uint64_t seed, const ScaleRange& range = {});

/// World-frame signed distance with a bounding sphere for ray culling.
struct SdfScene {
  std::function<double(const Vec3&)> sdf;
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

SdfScene object_scene(const ObjectSpec& spec, const RigidTransform& pose);

/// Sphere tracing; hits are refined to |sdf| < 1e-6.
DepthNormalImage render(const SdfScene& scene, const CameraModel& cam);
DepthNormalImage render(const ObjectSpec& spec, const RigidTransform& pose, const CameraModel& cam);

/// Inverse pinhole projection of every hit pixel.
OrientedPointCloud project_to_cloud(const DepthNormalImage& img, const CameraModel& cam);

struct AugmentParams {
  double noise_std = 0.005;
  double extra_noise_std = 0.01;
};

/// Cosine-similarity driven dropout and noise. `view` is the camera position
/// relative to the object, expressed in the cloud's frame.
OrientedPointCloud augment(const OrientedPointCloud& cloud, const Vec3& view, std::uint64_t seed,
                           const AugmentParams& params = {});

/// Camera frame -> gravity-aligned world frame of the object.
OrientedPointCloud to_robot_world(const OrientedPointCloud& cloud, const CameraModel& cam);

/// Evaluation/prediction box inferred from an observed world-frame cloud:
/// a cube around the vertical axis through the origin, resting slightly below z = 0.
Box3 scene_box(const OrientedPointCloud& world_cloud);

enum class Label : std::uint8_t { free = 0, occupied = 1, uncertain = 2 };

struct QuerySet {
  std::vector<Vec3> points;
  std::vector<std::uint8_t> labels;
};

struct QueryParams {
  double near_surface_fraction = 0.5;
  /// Offset std as a fraction of the object's largest extent.
  double near_surface_std = 0.01;
};

/// Labeled query points: uniform in `box` plus jittered surface samples.
QuerySet make_query_set(const ObjectSpec& spec, const RigidTransform& pose, const Region3& uncertain,
                        const Box3& box, std::size_t n, std::uint64_t seed, const QueryParams& params = {});
std::uint8_t label_point(const ObjectSpec& spec, const RigidTransform& pose, const Region3& uncertain,
                         const Vec3& p);

struct GenerationParams {
  CameraSampling camera;
  ScaleRange scale;
  AugmentParams augment;
  QueryParams queries;
  int grid_resolution = 48;
  std::size_t n_queries = 2048;
  int ambiguity_samples = 72;
  double theta_sim = 0.98;
  int signature_size = 64;
  double signature_depth_scale = 0.005;
  double translation_jitter = 0.0;
};

struct DatasetSample {
  std::string id;
  std::uint64_t seed = 0;
  int object_index = 0;
  ObjectSpec spec;          // scaled
  RigidTransform pose;      // object -> world
  CameraModel camera;
  OrientedPointCloud cloud; // robot-world frame
  QuerySet queries;
  Region3 uncertain;
  std::size_t accepted_poses = 0;

  /// Occupancy under the true pose, excluding the uncertain region.
  Region3 occupied_region() const;
};

/// Runs the whole datum generation for one seed.
DatasetSample generate_sample(const ObjectSpec& base, int object_index, std::uint64_t seed,
                              const GenerationParams& params = {});

void write_sample(const DatasetSample& s, const std::filesystem::path& dir);
DatasetSample read_sample(const std::filesystem::path& dir);

void write_cloud(const OrientedPointCloud& cloud, const std::filesystem::path& path);
OrientedPointCloud read_cloud(const std::filesystem::path& path);

}  // namespace shapecomp
