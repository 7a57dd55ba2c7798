#include "shapecomp/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "shapecomp/ambiguity.hpp"
#include "shapecomp/io.hpp"
#include "shapecomp/mesh.hpp"
#include "shapecomp/rng.hpp"

namespace shapecomp {

bool CameraModel::is_valid() const {
  return (position - target).norm() > 1e-9 && width >= 16 && height >= 16 && focal_px > 0 && up.norm() > 0;
}

RigidTransform CameraModel::camera_to_world() const {
  const Vec3 forward = (target - position).normalized();
  Vec3 up_hint = up.normalized();
  if (std::abs(forward.dot(up_hint)) > 1.0 - 1e-9) up_hint = Vec3::UnitX();
  const Vec3 right = forward.cross(up_hint).normalized();
  const Vec3 down = forward.cross(right);
  RigidTransform T;
  T.rotation.col(0) = right;
  T.rotation.col(1) = down;
  T.rotation.col(2) = forward;
  T.translation = position;
  return T;
}

CameraModel CameraModel::with_resolution(int size, double half_fov) const {
  CameraModel c = *this;
  c.width = size;
  c.height = size;
  c.focal_px = 0.5 * size / std::tan(half_fov);
  return c;
}

Vec3 CameraModel::ray_direction(double u, double v) const {
  return {(u - 0.5 * width) / focal_px, (v - 0.5 * height) / focal_px, 1.0};
}

std::size_t DepthNormalImage::hit_count() const {
  return static_cast<std::size_t>(std::count_if(depth.begin(), depth.end(), [](double d) { return d > 0.0; }));
}

CameraModel sample_camera(std::uint64_t seed, const Vec3& target, const CameraSampling& opts) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // z uniform in [0,1) with uniform azimuth is uniform on the hemisphere.
  const double z = u(rng);
  const double azimuth = 2.0 * std::numbers::pi * u(rng);
  const double dist = opts.min_distance + (opts.max_distance - opts.min_distance) * u(rng);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  CameraModel cam;
  cam.position = target + dist * Vec3(r * std::cos(azimuth), r * std::sin(azimuth), z);
  cam.target = target;
  cam.up = Vec3::UnitZ();
  cam.focal_px = opts.focal_px;
  cam.width = opts.image_size;
  cam.height = opts.image_size;
  return cam;
}

ObjectSpec scale_object(const ObjectSpec& spec, std::uint64_t seed, const ScaleRange& range) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double extent = range.min_extent + (range.max_extent - range.min_extent) * u(rng);
  const double zs = range.min_z + (range.max_z - range.min_z) * u(rng);
  ObjectSpec out = spec;
  out.z_scale = zs;
  out.global_scale = 1.0;
  out.global_scale = extent / out.max_extent();
  return out;
}

SdfScene object_scene(const ObjectSpec& spec, const RigidTransform& pose) {
  const Box3 b = spec.bounds();
  SdfScene scene;
  scene.sdf = [spec, pose](const Vec3& p) { return sdf_object(spec, pose, p); };
  scene.center = pose.apply(b.center());
  scene.radius = 0.5 * b.extent().norm() * 1.01 + 1e-4;
  return scene;
}

DepthNormalImage render(const SdfScene& scene, const CameraModel& cam) {
  constexpr double hit_eps = 1e-6;
  constexpr int max_steps = 512;
  const RigidTransform T = cam.camera_to_world();
  DepthNormalImage img;
  img.width = cam.width;
  img.height = cam.height;
  img.depth.assign(static_cast<std::size_t>(cam.width) * cam.height, 0.0);
  img.normals.assign(img.depth.size(), Vec3::Zero());
  const Vec3 origin = cam.position;
  const Vec3 oc = origin - scene.center;

  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      const Vec3 dc = cam.ray_direction(u + 0.5, v + 0.5);
      const double dc_norm = dc.norm();
      const Vec3 dir = T.rotation * (dc / dc_norm);
      const double b = oc.dot(dir);
      const double disc = b * b - (oc.squaredNorm() - scene.radius * scene.radius);
      if (disc < 0) continue;
      const double sq = std::sqrt(disc);
      double t = std::max(0.0, -b - sq);
      const double t_exit = -b + sq;
      bool hit = false;
      for (int step = 0; step < max_steps && t <= t_exit; ++step) {
        const double d = scene.sdf(origin + t * dir);
        if (d < hit_eps) {
          hit = true;
          break;
        }
        t += d;
      }
      if (!hit) continue;
      const Vec3 p = origin + t * dir;
      Vec3 g;
      constexpr double h = 1e-6;
      for (int a = 0; a < 3; ++a) {
        Vec3 dp = Vec3::Zero();
        dp[a] = h;
        g[a] = scene.sdf(p + dp) - scene.sdf(p - dp);
      }
      const std::size_t px = static_cast<std::size_t>(v) * cam.width + u;
      img.depth[px] = t / dc_norm;
      const double gn = g.norm();
      img.normals[px] = gn > 0 ? Vec3(T.rotation.transpose() * (g / gn)) : Vec3(-dir);
    }
  }
  return img;
}

DepthNormalImage render(const ObjectSpec& spec, const RigidTransform& pose, const CameraModel& cam) {
  return render(object_scene(spec, pose), cam);
}

OrientedPointCloud project_to_cloud(const DepthNormalImage& img, const CameraModel& cam) {
  OrientedPointCloud cloud;
  cloud.frame = Frame::camera;
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const std::size_t px = static_cast<std::size_t>(v) * img.width + u;
      if (img.depth[px] <= 0.0) continue;
      cloud.points.push_back(img.depth[px] * cam.ray_direction(u + 0.5, v + 0.5));
      cloud.normals.push_back(img.normals[px]);
    }
  }
  return cloud;
}

OrientedPointCloud augment(const OrientedPointCloud& cloud, const Vec3& view, std::uint64_t seed,
                           const AugmentParams& params) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double view_norm = view.norm();
  OrientedPointCloud out;
  out.frame = cloud.frame;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    // Fixed number of draws per point keeps the stream aligned across points.
    const Vec3 n1(noise(rng), noise(rng), noise(rng));
    const double u_remove = uni(rng);
    const double u_noise = uni(rng);
    const Vec3 n2(noise(rng), noise(rng), noise(rng));

    Vec3 p = cloud.points[i] + params.noise_std * n1;
    const Vec3& n = cloud.normals[i];
    const double denom = n.norm() * view_norm;
    const double s = denom > 0 ? n.dot(view) / denom : 0.0;
    if (std::abs(s) < u_remove) continue;
    if (std::abs(s) < u_noise) p += params.extra_noise_std * n2;
    out.points.push_back(p);
    out.normals.push_back(n);
  }
  return out;
}

OrientedPointCloud to_robot_world(const OrientedPointCloud& cloud, const CameraModel& cam) {
  const RigidTransform T = cam.camera_to_world();
  OrientedPointCloud out;
  out.frame = Frame::robot_world;
  out.points.reserve(cloud.size());
  out.normals.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out.points.push_back(T.apply(cloud.points[i]));
    out.normals.push_back(T.apply_direction(cloud.normals[i]));
  }
  return out;
}

namespace {

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  const auto k = static_cast<std::size_t>(std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

}  // namespace

Box3 scene_box(const OrientedPointCloud& world_cloud) {
  if (world_cloud.empty()) throw std::invalid_argument("scene_box: empty cloud");
  std::vector<double> radial, heights;
  radial.reserve(world_cloud.size());
  heights.reserve(world_cloud.size());
  for (const auto& p : world_cloud.points) {
    radial.push_back(std::hypot(p.x(), p.y()));
    heights.push_back(p.z());
  }
  const double r = percentile(radial, 0.98);
  const double h = percentile(heights, 0.98);
  // Hidden handles reach up to ~1.75 body radii from the axis.
  const double side = std::max({3.8 * r, 1.25 * h, 1e-3});
  return {Vec3(-0.5 * side, -0.5 * side, -0.05 * side), Vec3(0.5 * side, 0.5 * side, 0.95 * side)};
}

std::uint8_t label_point(const ObjectSpec& spec, const RigidTransform& pose, const Region3& uncertain,
                         const Vec3& p) {
  if (uncertain.contains_point(p)) return static_cast<std::uint8_t>(Label::uncertain);
  return sdf_object(spec, pose, p) < 0.0 ? static_cast<std::uint8_t>(Label::occupied)
                                         : static_cast<std::uint8_t>(Label::free);
}

QuerySet make_query_set(const ObjectSpec& spec, const RigidTransform& pose, const Region3& uncertain,
                        const Box3& box, std::size_t n, std::uint64_t seed, const QueryParams& params) {
  if (n == 0) throw std::invalid_argument("make_query_set: n must be > 0");
  const auto n_near = static_cast<std::size_t>(std::llround(params.near_surface_fraction * static_cast<double>(n)));
  const std::size_t n_uniform = n - n_near;
  QuerySet q;
  q.points.reserve(n);
  if (n_uniform > 0) q.points = sample_points(box, n_uniform, derive_seed(seed, 1));

  if (n_near > 0) {
    // Surface samples from a fine isosurface of the object-frame SDF.
    const Box3 ob = spec.bounds().padded(0.05);
    const GridSpec g = GridSpec::cube(ob, 64);
    ScalarGrid3 field(g, 1);
    for (std::size_t i = 0; i < g.node_count(); ++i) field.values[i] = -sdf_object(spec, g.position(i));
    const TriangleMesh surface = marching_cubes(field, 0.0);
    const SurfaceSample ss = sample_surface(surface, n_near, derive_seed(seed, 2));
    std::mt19937_64 rng(derive_seed(seed, 3));
    std::normal_distribution<double> noise(0.0, params.near_surface_std * spec.max_extent());
    for (const auto& p : ss.points) {
      const Vec3 offset(noise(rng), noise(rng), noise(rng));
      q.points.push_back(pose.apply(p) + offset);
    }
  }
  q.labels.reserve(q.points.size());
  for (const auto& p : q.points) q.labels.push_back(label_point(spec, pose, uncertain, p));
  return q;
}

Region3 DatasetSample::occupied_region() const {
  Region3 occ = voxelize(spec, pose, uncertain.spec);
  return region_difference(occ, uncertain);
}

DatasetSample generate_sample(const ObjectSpec& base, int object_index, std::uint64_t seed,
                              const GenerationParams& params) {
  DatasetSample s;
  s.seed = seed;
  s.object_index = object_index;
  s.spec = scale_object(base, derive_seed(seed, 2), params.scale);
  const Vec3 center(0.0, 0.0, 0.5 * s.spec.height());
  {
    std::mt19937_64 rng(derive_seed(seed, 3));
    std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
    s.pose = RigidTransform::rotation_z(u(rng));
  }
  for (int attempt = 0;; ++attempt) {
    const std::uint64_t view_seed = derive_seed(seed, 100 + static_cast<std::uint64_t>(attempt));
    s.camera = sample_camera(derive_seed(view_seed, 1), center, params.camera);
    const DepthNormalImage img = render(s.spec, s.pose, s.camera);
    const OrientedPointCloud cam_cloud = project_to_cloud(img, s.camera);
    const RigidTransform T = s.camera.camera_to_world();
    const Vec3 view = T.rotation.transpose() * (s.camera.position - center);
    const OrientedPointCloud aug = augment(cam_cloud, view, derive_seed(view_seed, 4), params.augment);
    s.cloud = to_robot_world(aug, s.camera);
    if (s.cloud.size() >= 64 || attempt >= 20) break;
  }
  if (s.cloud.empty()) throw std::runtime_error("generate_sample: no points survived rendering");

  const GridSpec grid = GridSpec::cube(scene_box(s.cloud), params.grid_resolution);
  AmbiguityParams ap;
  ap.n_samples = params.ambiguity_samples;
  ap.theta_sim = params.theta_sim;
  ap.translation_jitter = params.translation_jitter;
  ap.signature.size = params.signature_size;
  ap.signature.depth_scale = params.signature_depth_scale;
  const AmbiguousPoseSet poses = find_ambiguous_poses(s.spec, s.pose, s.camera, derive_seed(seed, 5), ap);
  s.accepted_poses = poses.transforms.size();
  s.uncertain = uncertain_region(s.spec, s.pose, poses, grid);
  s.queries = make_query_set(s.spec, s.pose, s.uncertain, grid.bounds(), params.n_queries, derive_seed(seed, 6),
                             params.queries);
  return s;
}

// ---------------------------------------------------------------------------
// files

void write_cloud(const OrientedPointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    const auto& n = cloud.normals[i];
    out << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z()) << ' '
        << format_double(n.x()) << ' ' << format_double(n.y()) << ' ' << format_double(n.z()) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

OrientedPointCloud read_cloud(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  OrientedPointCloud cloud;
  cloud.frame = Frame::robot_world;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    std::array<std::string, 6> tok;
    for (auto& t : tok) ls >> t;
    if (!ls) throw IoError("bad cloud line in " + path.string());
    cloud.points.emplace_back(parse_double(tok[0]), parse_double(tok[1]), parse_double(tok[2]));
    cloud.normals.emplace_back(parse_double(tok[3]), parse_double(tok[4]), parse_double(tok[5]));
  }
  return cloud;
}

namespace {

std::string join_vec(const Vec3& v) {
  return format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z());
}

Vec3 parse_vec(const std::string& s) {
  std::istringstream ss(s);
  std::array<std::string, 3> t;
  for (auto& x : t) ss >> x;
  return {parse_double(t[0]), parse_double(t[1]), parse_double(t[2])};
}

const std::string& require(const KeyValues& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw IoError("meta.txt missing key '" + key + "'");
  return it->second;
}

}  // namespace

void write_sample(const DatasetSample& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_cloud(s.cloud, dir / "cloud.xyzn");
  {
    std::ofstream out(dir / "queries.lbl");
    if (!out) throw IoError("cannot write " + (dir / "queries.lbl").string());
    for (std::size_t i = 0; i < s.queries.points.size(); ++i)
      out << join_vec(s.queries.points[i]) << ' ' << static_cast<int>(s.queries.labels[i]) << '\n';
  }
  write_region(s.uncertain, dir / "uncertain.sg3");

  KeyValues kv;
  kv["id"] = s.id;
  kv["seed"] = std::to_string(s.seed);
  kv["object_index"] = std::to_string(s.object_index);
  kv["spec.body_radius"] = format_double(s.spec.body_radius);
  kv["spec.body_height"] = format_double(s.spec.body_height);
  kv["spec.wall_thickness"] = format_double(s.spec.wall_thickness);
  kv["spec.handle_present"] = s.spec.handle_present ? "1" : "0";
  kv["spec.handle_tube_radius"] = format_double(s.spec.handle_tube_radius);
  kv["spec.handle_loop_radius"] = format_double(s.spec.handle_loop_radius);
  kv["spec.handle_azimuth"] = format_double(s.spec.handle_azimuth);
  kv["spec.global_scale"] = format_double(s.spec.global_scale);
  kv["spec.z_scale"] = format_double(s.spec.z_scale);
  std::string pose;
  for (double v : s.pose.rows()) pose += (pose.empty() ? "" : " ") + format_double(v);
  kv["pose"] = pose;
  kv["camera.position"] = join_vec(s.camera.position);
  kv["camera.target"] = join_vec(s.camera.target);
  kv["camera.up"] = join_vec(s.camera.up);
  kv["camera.focal_px"] = format_double(s.camera.focal_px);
  kv["camera.width"] = std::to_string(s.camera.width);
  kv["camera.height"] = std::to_string(s.camera.height);
  kv["accepted_poses"] = std::to_string(s.accepted_poses);
  write_key_values(kv, dir / "meta.txt");
}

DatasetSample read_sample(const std::filesystem::path& dir) {
  DatasetSample s;
  const KeyValues kv = read_key_values(dir / "meta.txt");
  s.id = kv.count("id") ? kv.at("id") : dir.filename().string();
  s.seed = static_cast<std::uint64_t>(std::stoull(require(kv, "seed")));
  s.object_index = static_cast<int>(parse_int(require(kv, "object_index")));
  s.spec.body_radius = parse_double(require(kv, "spec.body_radius"));
  s.spec.body_height = parse_double(require(kv, "spec.body_height"));
  s.spec.wall_thickness = parse_double(require(kv, "spec.wall_thickness"));
  s.spec.handle_present = require(kv, "spec.handle_present") == "1";
  s.spec.handle_tube_radius = parse_double(require(kv, "spec.handle_tube_radius"));
  s.spec.handle_loop_radius = parse_double(require(kv, "spec.handle_loop_radius"));
  s.spec.handle_azimuth = parse_double(require(kv, "spec.handle_azimuth"));
  s.spec.global_scale = parse_double(require(kv, "spec.global_scale"));
  s.spec.z_scale = parse_double(require(kv, "spec.z_scale"));
  {
    std::istringstream ss(require(kv, "pose"));
    std::array<double, 12> rows{};
    for (auto& r : rows) {
      std::string t;
      ss >> t;
      r = parse_double(t);
    }
    s.pose = RigidTransform::from_rows(rows);
  }
  s.camera.position = parse_vec(require(kv, "camera.position"));
  s.camera.target = parse_vec(require(kv, "camera.target"));
  s.camera.up = parse_vec(require(kv, "camera.up"));
  s.camera.focal_px = parse_double(require(kv, "camera.focal_px"));
  s.camera.width = static_cast<int>(parse_int(require(kv, "camera.width")));
  s.camera.height = static_cast<int>(parse_int(require(kv, "camera.height")));
  s.accepted_poses = static_cast<std::size_t>(parse_int(require(kv, "accepted_poses")));

  s.cloud = read_cloud(dir / "cloud.xyzn");
  {
    std::ifstream in(dir / "queries.lbl");
    if (!in) throw IoError("cannot read " + (dir / "queries.lbl").string());
    std::string line;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      std::istringstream ls(line);
      std::array<std::string, 4> t;
      for (auto& x : t) ls >> x;
      if (!ls) throw IoError("bad query line in " + (dir / "queries.lbl").string());
      s.queries.points.emplace_back(parse_double(t[0]), parse_double(t[1]), parse_double(t[2]));
      const auto label = parse_int(t[3]);
      if (label < 0 || label > 2) throw IoError("label out of range in queries.lbl");
      s.queries.labels.push_back(static_cast<std::uint8_t>(label));
    }
  }
  s.uncertain = read_region(dir / "uncertain.sg3");
  return s;
}

}  // namespace shapecomp
