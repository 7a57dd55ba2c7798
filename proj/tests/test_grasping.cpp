#include <doctest.h>

#include <random>

#include "shapecomp/grasping.hpp"
#include "shapecomp/io.hpp"
#include "test_util.hpp"

using namespace shapecomp;

namespace {

TriangleMesh box_mesh(const Vec3& lo, const Vec3& hi) {
  TriangleMesh m;
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 2; ++i)
        m.vertices.emplace_back(i ? hi.x() : lo.x(), j ? hi.y() : lo.y(), k ? hi.z() : lo.z());
  // vertex id = i + 2j + 4k; outward-oriented faces
  m.triangles = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
                 {1, 3, 7}, {1, 7, 5}, {3, 2, 6}, {3, 6, 7}, {2, 0, 4}, {2, 4, 6}};
  return m;
}

GridSpec unit_grid(int n = 40) {
  GridSpec g;
  g.origin = Vec3::Constant(-0.2);
  g.spacing = 0.4 / (n - 1);
  g.dims = {n, n, n};
  return g;
}

RigidTransform random_pose(std::mt19937_64& rng, double radius) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(-radius, radius);
  const Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  RigidTransform T;
  T.rotation = q.normalized().toRotationMatrix();
  T.translation = Vec3(u(rng), u(rng), u(rng));
  return T;
}

bool brute_intersects(const GraspCandidate& c, const Region3& r) {
  const auto boxes = c.swept_volume(GripperGeometry{});
  for (std::size_t n = 0; n < r.mask.size(); ++n) {
    if (!r.mask[n]) continue;
    for (const auto& b : boxes)
      if (b.contains(r.spec.position(n))) return true;
  }
  return false;
}

ObjectSpec small_mug() {
  ObjectSpec s;
  s.global_scale = 0.1;
  return s;
}

}  // namespace

TEST_SUITE("grasping") {

TEST_CASE("swept volume boxes sit outside the contacts") {
  GraspCandidate c;
  c.jaw_span = 0.04;
  const GripperGeometry g;
  const auto boxes = c.swept_volume(g);
  CHECK(boxes[0].half.isApprox(0.5 * g.finger));
  CHECK(boxes[2].half.isApprox(0.5 * g.palm));
  // Fingers start exactly at +-jaw_span/2 along x.
  CHECK(boxes[0].contains(Vec3(-0.02, 0, 0)));
  CHECK(boxes[1].contains(Vec3(0.02, 0, 0)));
  CHECK_FALSE(boxes[1].contains(Vec3(0.019, 0, 0)));
  CHECK_FALSE(boxes[0].contains(Vec3::Zero()));
  CHECK_FALSE(boxes[2].contains(Vec3::Zero()));
  // Fingertips reach tip_depth past the origin along the approach axis.
  CHECK(boxes[1].contains(Vec3(0.03, 0, g.tip_depth)));
  CHECK_FALSE(boxes[1].contains(Vec3(0.03, 0, g.tip_depth + 1e-6)));
}

TEST_CASE("a thin plate yields antipodal grasps across its faces") {
  const TriangleMesh plate = box_mesh(Vec3(-0.05, -0.05, -0.01), Vec3(0.05, 0.05, 0.01));
  const auto grasps = sample_grasps(plate, 30, 11);
  REQUIRE(grasps.size() == 30);
  const GripperGeometry g;
  for (const auto& c : grasps) {
    CHECK(c.jaw_span == doctest::Approx(0.02 + 2 * g.clearance));
    CHECK(std::abs(c.pose.rotation.col(0).z()) == doctest::Approx(1.0));
    CHECK(std::abs(c.contacts[0].z() - c.contacts[1].z()) == doctest::Approx(0.02));
    CHECK((c.pose.rotation.transpose() * c.pose.rotation - Mat3::Identity()).norm() < 1e-12);
    CHECK(c.pose.rotation.determinant() == doctest::Approx(1.0));
    // contacts lie strictly inside the jaw opening
    for (const auto& p : c.contacts) CHECK(std::abs(c.pose.inverse().apply(p).x()) < 0.5 * c.jaw_span);
  }
}

TEST_CASE("objects wider than the jaws give no candidates") {
  const TriangleMesh big = box_mesh(Vec3::Constant(-0.1), Vec3::Constant(0.1));
  CHECK(sample_grasps(big, 20, 3).empty());
  CHECK_THROWS_AS(sample_grasps(TriangleMesh{}, 20, 3), std::invalid_argument);
}

TEST_CASE("grasp sampling is deterministic per seed") {
  const TriangleMesh plate = box_mesh(Vec3(-0.05, -0.05, -0.01), Vec3(0.05, 0.05, 0.01));
  const auto a = sample_grasps(plate, 10, 5), b = sample_grasps(plate, 10, 5), c = sample_grasps(plate, 10, 6);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].pose.rows() == b[i].pose.rows());
    CHECK(a[i].jaw_span == b[i].jaw_span);
  }
  CHECK(a[0].pose.rows() != c[0].pose.rows());
}

TEST_CASE("obstacle regions reject candidates") {
  const TriangleMesh plate = box_mesh(Vec3(-0.05, -0.05, -0.01), Vec3(0.05, 0.05, 0.01));
  Region3 all(unit_grid(20));
  std::fill(all.mask.begin(), all.mask.end(), 1);
  GraspSampling p;
  p.obstacle = &all;
  CHECK(sample_grasps(plate, 10, 5, p).empty());
  const Region3 none(unit_grid(20));
  p.obstacle = &none;
  CHECK(sample_grasps(plate, 10, 5, p).size() == 10);
}

TEST_CASE("region intersection agrees with a brute-force oracle") {
  const GridSpec g = unit_grid(30);
  std::mt19937_64 rng(17);
  Region3 r(g);
  std::bernoulli_distribution b(0.01);
  for (auto& m : r.mask) m = b(rng);
  int hits = 0;
  for (int t = 0; t < 100; ++t) {
    GraspCandidate c;
    c.pose = random_pose(rng, 0.15);
    c.jaw_span = 0.02 + 0.06 * std::uniform_real_distribution<double>(0, 1)(rng);
    const bool expected = brute_intersects(c, r);
    CHECK(intersects_region(c, r) == expected);
    hits += expected;
  }
  CHECK(hits > 10);
  CHECK(hits < 90);
}

TEST_CASE("region intersection trivial cases") {
  const GridSpec g = unit_grid(41);
  Region3 blob(g);
  // One voxel exactly on the face of the right finger (x = jaw_span / 2).
  GraspCandidate c;
  c.jaw_span = 0.04;
  const auto node = *g.nearest(Vec3(0.02, 0, 0));
  blob.mask[node] = 1;
  CHECK(g.position(node).isApprox(Vec3(0.02, 0, 0)));
  CHECK(intersects_region(c, blob));
  GraspCandidate far = c;
  far.pose.translation = Vec3(0.0, 0.0, 0.19);
  CHECK_FALSE(intersects_region(far, blob));
  CHECK_FALSE(intersects_region(c, Region3(g)));
  // A voxel one spacing inside the opening is only caught with a margin.
  Region3 gap(g);
  gap.mask[*g.nearest(Vec3(0.01, 0, 0))] = 1;
  CHECK_FALSE(intersects_region(c, gap));
  CHECK(intersects_region(c, gap, {}, 0.01));
}

TEST_CASE("filtering keeps order, flags total failure and is monotone") {
  const GridSpec g = unit_grid(30);
  std::mt19937_64 rng(23);
  std::vector<GraspCandidate> cands(60);
  for (auto& c : cands) {
    c.pose = random_pose(rng, 0.15);
    c.jaw_span = 0.05;
  }
  Region3 small(g), large(g);
  std::bernoulli_distribution b(0.002);
  for (std::size_t n = 0; n < small.mask.size(); ++n) {
    small.mask[n] = b(rng);
    large.mask[n] = small.mask[n] || b(rng) || b(rng);
  }
  const FilterResult fs = filter_grasps(cands, small), fl = filter_grasps(cands, large);
  std::vector<GraspCandidate> expected;
  for (const auto& c : cands)
    if (!intersects_region(c, small)) expected.push_back(c);
  REQUIRE(fs.kept.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(fs.kept[i].pose.rows() == expected[i].pose.rows());
  CHECK(fs.removed + fs.kept.size() == cands.size());
  CHECK(fl.removed >= fs.removed);
  for (const auto& k : fl.kept) CHECK_FALSE(intersects_region(k, small));

  const FilterResult id = filter_grasps(cands, Region3(g));
  CHECK(id.kept.size() == cands.size());
  CHECK_FALSE(id.failure);
  Region3 full(g);
  std::fill(full.mask.begin(), full.mask.end(), 1);
  const FilterResult none = filter_grasps(cands, full);
  CHECK(none.kept.empty());
  CHECK(none.failure);
}

TEST_CASE("a gripper through the handle collides") {
  const ObjectSpec s = small_mug();
  GraspCandidate c;
  c.jaw_span = 0.001;
  // Centre of the handle tube at its outermost point.
  c.pose.translation = Vec3(s.radius() + s.loop(), 0, 0.5 * s.height());
  CHECK(sdf_object(s, c.pose.translation) < 0);
  CHECK(collides(c, s, RigidTransform()));
  GraspCandidate away = c;
  away.pose.translation = Vec3(0.5, 0.5, 0.5);
  CHECK_FALSE(collides(away, s, RigidTransform()));
  CHECK(collision_rate(std::vector<GraspCandidate>{c, away}, s, RigidTransform()) == 0.5);
}

TEST_CASE("grasps planned around a handleless mug do not collide with it") {
  ObjectSpec s = small_mug();
  s.handle_present = false;
  // Lattice fine enough that the finger clearance spans several voxels.
  const GridSpec g = GridSpec::cube(s.bounds().padded(0.1), 64);
  const Region3 occ = voxelize(s, RigidTransform(), g);
  const TriangleMesh mesh = marching_cubes(region_indicator(occ), 0.5);
  GraspSampling p;
  p.obstacle = &occ;
  const auto grasps = sample_grasps(mesh, 40, 2, p);
  REQUIRE(grasps.size() >= 5);
  CHECK(collision_rate(grasps, s, RigidTransform()) == 0.0);
}

TEST_CASE("collision rate agrees with a finer probe lattice") {
  const ObjectSpec s = small_mug();
  std::mt19937_64 rng(31);
  std::vector<GraspCandidate> cands(200);
  for (auto& c : cands) {
    c.pose = random_pose(rng, 0.12);
    c.pose.translation += Vec3(0, 0, 0.05);
    c.jaw_span = 0.06;
  }
  const double coarse = collision_rate(cands, s, RigidTransform(), {}, 0.005);
  const double fine = collision_rate(cands, s, RigidTransform(), {}, 0.002);
  CHECK(coarse > 0.1);
  CHECK(coarse < 0.9);
  CHECK(std::abs(coarse - fine) <= 0.01);
}

TEST_CASE("grasp files round-trip") {
  const test::TempDir dir;
  std::mt19937_64 rng(1);
  std::vector<GraspCandidate> grasps(5);
  for (auto& c : grasps) {
    c.pose = random_pose(rng, 0.1);
    c.jaw_span = 0.0312345;
  }
  grasps[2].blocked = true;
  write_grasps(grasps, dir.path / "g.txt");
  const auto back = read_grasps(dir.path / "g.txt");
  REQUIRE(back.size() == grasps.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].pose.rows() == grasps[i].pose.rows());
    CHECK(back[i].jaw_span == grasps[i].jaw_span);
    CHECK(back[i].blocked == grasps[i].blocked);
  }
  test::write_text(dir.path / "bad.txt", "1 2 3\n");
  CHECK_THROWS_AS(read_grasps(dir.path / "bad.txt"), IoError);
  CHECK_THROWS_AS(read_grasps(dir.path / "missing.txt"), IoError);
}

}
