#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "shapecomp/grid.hpp"
#include "shapecomp/io.hpp"
#include "shapecomp/mesh.hpp"
#include "shapecomp/object.hpp"
#include "shapecomp/types.hpp"
#include "test_util.hpp"

using namespace shapecomp;

TEST_SUITE("geometry") {

TEST_CASE("rigid transforms compose, invert and preserve distances") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    RigidTransform a, b;
    a.rotation = rotation_from_uniforms(u(rng), u(rng), u(rng));
    b.rotation = rotation_from_uniforms(u(rng), u(rng), u(rng));
    a.translation = Vec3(u(rng), u(rng), u(rng)) * 4.0 - Vec3::Constant(2.0);
    b.translation = Vec3(u(rng), u(rng), u(rng));
    CHECK(a.is_valid());
    const Vec3 p(u(rng), u(rng), u(rng)), q(u(rng), u(rng), u(rng));
    CHECK(std::abs((a.apply(p) - a.apply(q)).norm() - (p - q).norm()) < 1e-12);
    CHECK((a.compose(b).apply(p) - a.apply(b.apply(p))).norm() < 1e-12);
    CHECK((a.inverse().apply(a.apply(p)) - p).norm() < 1e-12);
    CHECK((RigidTransform::from_rows(a.rows()).apply(p) - a.apply(p)).norm() == 0.0);
  }
}

TEST_CASE("rotation_z keeps its pivot and the z coordinate") {
  const Vec3 pivot(0.3, -0.2, 0.7);
  const RigidTransform r = RigidTransform::rotation_z(1.1, pivot);
  CHECK((r.apply(pivot) - pivot).norm() < 1e-15);
  const Vec3 p(1.0, 2.0, 3.0);
  CHECK(r.apply(p).z() == doctest::Approx(3.0).epsilon(1e-15));
  const RigidTransform quarter = RigidTransform::rotation_z(std::numbers::pi / 2);
  CHECK((quarter.apply(Vec3(1, 0, 0)) - Vec3(0, 1, 0)).norm() < 1e-15);
}

TEST_CASE("invalid rotations are detected") {
  RigidTransform t;
  t.rotation(0, 0) = -1.0;  // reflection
  CHECK_FALSE(t.is_valid());
  t.rotation = Mat3::Identity() * 1.01;
  CHECK_FALSE(t.is_valid());
}

TEST_CASE("grid indexing round-trips and nearest snaps to nodes") {
  GridSpec g;
  g.origin = Vec3(-1, 0, 2);
  g.spacing = 0.25;
  g.dims = {5, 7, 3};
  for (std::size_t n = 0; n < g.node_count(); ++n) {
    const auto ijk = g.unravel(n);
    CHECK(g.index(ijk[0], ijk[1], ijk[2]) == n);
    CHECK(g.nearest(g.position(n) + Vec3(0.1, -0.1, 0.12)) == n);
  }
  CHECK_FALSE(g.nearest(Vec3(-1.2, 0, 2)).has_value());
  CHECK(g.nearest(Vec3(-1.1, 0, 2)) == std::optional<std::size_t>(0));
}

TEST_CASE("GridSpec::cube covers the box with the requested resolution") {
  const Box3 box{Vec3(-0.1, -0.2, 0.0), Vec3(0.3, 0.1, 0.05)};
  const GridSpec g = GridSpec::cube(box, 32);
  const Box3 b = g.bounds();
  CHECK(g.dims == std::array<int, 3>{32, 32, 32});
  CHECK((b.lo.array() <= box.lo.array() + 1e-12).all());
  CHECK((b.hi.array() >= box.hi.array() - 1e-12).all());
}

TEST_CASE("central differences are exact on linear and quadratic fields") {
  GridSpec g;
  g.origin = Vec3(-0.5, -0.3, 0.1);
  g.spacing = 0.05;
  g.dims = {12, 10, 9};
  ScalarGrid3 lin(g, 1), quad(g, 1);
  const Vec3 a(0.7, -1.3, 2.1);
  for (std::size_t n = 0; n < g.node_count(); ++n) {
    const Vec3 p = g.position(n);
    lin.at(n) = a.dot(p) + 0.4;
    quad.at(n) = p.x() * p.x() - 2.0 * p.y() * p.z() + 3.0 * p.z() * p.z();
  }
  const ScalarGrid3 gl = grid_gradient(lin);
  const ScalarGrid3 gq = grid_gradient(quad);
  for (std::size_t n = 0; n < g.node_count(); ++n) {
    for (int c = 0; c < 3; ++c) CHECK(std::abs(gl.at(n, c) - a[c]) < 1e-9);
    const auto ijk = g.unravel(n);
    bool interior = true;
    for (int d = 0; d < 3; ++d) interior = interior && ijk[d] > 0 && ijk[d] < g.dims[d] - 1;
    if (!interior) continue;
    const Vec3 p = g.position(n);
    const Vec3 exact(2.0 * p.x(), -2.0 * p.z(), -2.0 * p.y() + 6.0 * p.z());
    for (int c = 0; c < 3; ++c) CHECK(std::abs(gq.at(n, c) - exact[c]) < 1e-9);
  }
  const ScalarGrid3 mag = vector_magnitude(gl);
  CHECK(mag.at(0) == doctest::Approx(a.norm()).epsilon(1e-12));
}

TEST_CASE("marching cubes on a sphere matches analytic area and volume") {
  const double r = 0.3;
  const GridSpec g = GridSpec::cube({Vec3::Constant(-0.4), Vec3::Constant(0.4)}, 64);
  ScalarGrid3 f(g, 1);
  for (std::size_t n = 0; n < g.node_count(); ++n) f.at(n) = r - g.position(n).norm();
  const TriangleMesh m = marching_cubes(f, 0.0);
  CHECK(m.is_watertight());
  const double area = 4.0 * std::numbers::pi * r * r;
  const double volume = 4.0 / 3.0 * std::numbers::pi * r * r * r;
  CHECK(std::abs(m.area() - area) / area < 0.02);
  CHECK(std::abs(m.enclosed_volume() - volume) / volume < 0.02);
  for (const Vec3& v : m.vertices) CHECK(std::abs(v.norm() - r) < g.spacing);
}

TEST_CASE("marching cubes normals face the low side") {
  const GridSpec g = GridSpec::cube({Vec3::Constant(-1), Vec3::Constant(1)}, 16);
  ScalarGrid3 f(g, 1);
  for (std::size_t n = 0; n < g.node_count(); ++n) f.at(n) = 0.5 - g.position(n).norm();
  const TriangleMesh m = marching_cubes(f, 0.0);
  REQUIRE_FALSE(m.empty());
  for (std::size_t t = 0; t < m.triangles.size(); ++t) {
    const Vec3 c = (m.vertices[m.triangles[t][0]] + m.vertices[m.triangles[t][1]] + m.vertices[m.triangles[t][2]]) / 3;
    CHECK(m.normal(t).dot(c) > 0.0);
  }
}

TEST_CASE("every cube configuration places one vertex on each crossed edge") {
  GridSpec g;
  g.dims = {2, 2, 2};
  for (int config = 1; config < 255; ++config) {
    ScalarGrid3 f(g, 1);
    for (int c = 0; c < 8; ++c) f.at(c & 1, (c >> 1) & 1, (c >> 2) & 1) = (config >> c) & 1;
    std::vector<Vec3> midpoints;
    for (int c = 0; c < 8; ++c)
      for (int axis = 0; axis < 3; ++axis) {
        const int d = c | (1 << axis);
        if (d == c || ((config >> c) & 1) == ((config >> d) & 1)) continue;
        const Vec3 a(c & 1, (c >> 1) & 1, (c >> 2) & 1), b(d & 1, (d >> 1) & 1, (d >> 2) & 1);
        midpoints.push_back(0.5 * (a + b));
      }
    const TriangleMesh m = marching_cubes(f, 0.5);
    CHECK(m.vertices.size() == midpoints.size());
    for (const Vec3& v : m.vertices) {
      bool on_edge = false;
      for (const Vec3& p : midpoints) on_edge = on_edge || (v - p).norm() < 1e-12;
      CHECK(on_edge);
    }
    CHECK_FALSE(m.empty());
  }
}

TEST_CASE("connected components are 6-connected and size filtered") {
  GridSpec g;
  g.dims = {6, 6, 6};
  Region3 r(g);
  r.mask[g.index(0, 0, 0)] = 1;
  r.mask[g.index(1, 0, 0)] = 1;
  r.mask[g.index(2, 1, 0)] = 1;  // diagonal neighbour only: separate component
  for (int i = 3; i < 6; ++i)
    for (int j = 3; j < 6; ++j) r.mask[g.index(i, j, 5)] = 1;
  const Region3 all = connected_components(r, 0);
  CHECK(all.component_sizes.size() == 3);
  CHECK(all.count() == 12);
  const Region3 big = connected_components(r, 3);
  CHECK(big.count() == 9);
  CHECK(big.component_sizes.size() == 1);
  CHECK(big.labels[g.index(0, 0, 0)] == -1);
}

TEST_CASE("region set operations follow their boolean definitions") {
  GridSpec g;
  g.dims = {4, 4, 4};
  std::mt19937 rng(5);
  Region3 a(g), b(g);
  for (std::size_t n = 0; n < g.node_count(); ++n) {
    a.mask[n] = rng() & 1;
    b.mask[n] = rng() & 1;
  }
  const Region3 u = region_union(a, b), i = region_intersection(a, b), d = region_difference(a, b);
  for (std::size_t n = 0; n < g.node_count(); ++n) {
    CHECK(u.contains(n) == (a.contains(n) || b.contains(n)));
    CHECK(i.contains(n) == (a.contains(n) && b.contains(n)));
    CHECK(d.contains(n) == (a.contains(n) && !b.contains(n)));
  }
  CHECK(u.count() + i.count() == a.count() + b.count());
}

TEST_CASE("sample_points is deterministic and stays in the box") {
  const Box3 box{Vec3(-1, 0, 2), Vec3(0, 3, 2.5)};
  const auto p = sample_points(box, 1000, 9);
  CHECK(p == sample_points(box, 1000, 9));
  CHECK(p != sample_points(box, 1000, 10));
  for (const Vec3& x : p) CHECK(box.contains(x));
}

TEST_CASE("mug signed distance at known points") {
  ObjectSpec s;  // radius 0.45, height 1, wall 0.1
  s.handle_present = false;
  // Middle of the side wall: half a wall thickness inside.
  CHECK(sdf_object(s, Vec3(0.4, 0, 0.5)) == doctest::Approx(-0.05).epsilon(1e-12));
  // Centre of the cavity: nearest surface is the inner wall.
  CHECK(sdf_object(s, Vec3(0, 0, 0.5)) == doctest::Approx(0.35).epsilon(1e-12));
  // Middle of the base.
  CHECK(sdf_object(s, Vec3(0, 0, 0.05)) == doctest::Approx(-0.05).epsilon(1e-12));
  // Above the rim.
  CHECK(sdf_object(s, Vec3(0.4, 0, 1.2)) == doctest::Approx(0.2).epsilon(1e-12));
  s.handle_present = true;
  // Handle tube centre at the outermost point of the loop.
  CHECK(sdf_object(s, Vec3(0.45 + 0.22, 0, 0.5)) == doctest::Approx(-0.07).epsilon(1e-12));
  CHECK(s.reach() == doctest::Approx(0.45 + 0.22 + 0.07));
}

TEST_CASE("posed signed distance equals object-frame distance of the pulled-back point") {
  ObjectSpec s;
  s.handle_azimuth = 0.8;
  RigidTransform pose = RigidTransform::rotation_z(0.4);
  pose.translation = Vec3(0.1, -0.2, 0.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const Vec3 p(u(rng), u(rng), u(rng) + 0.5);
    CHECK(sdf_object(s, pose, pose.apply(p)) == doctest::Approx(sdf_object(s, p)).epsilon(1e-12));
  }
}

TEST_CASE("voxelize agrees with the sign of the signed distance") {
  const ObjectSpec s = random_object_spec(17);
  const RigidTransform pose = RigidTransform::rotation_z(2.0);
  const double R = s.reach();
  const GridSpec g = GridSpec::cube(Box3{Vec3(-R, -R, 0.0), Vec3(R, R, s.height())}.padded(0.1), 24);
  const Region3 r = voxelize(s, pose, g);
  std::size_t inside = 0;
  for (std::size_t n = 0; n < g.node_count(); ++n) {
    const bool expect = sdf_object(s, pose, g.position(n)) < 0.0;
    CHECK(r.contains(n) == expect);
    inside += expect;
  }
  CHECK(inside > 0);
}

TEST_CASE("random object specs are valid and deterministic") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const ObjectSpec a = random_object_spec(seed);
    CHECK(a.is_valid());
    CHECK(a.handle_present);
    CHECK(a.handle_azimuth == 0.0);
    const ObjectSpec b = random_object_spec(seed);
    CHECK(a.body_radius == b.body_radius);
    CHECK(a.handle_loop_radius == b.handle_loop_radius);
  }
}

TEST_CASE("doubles survive text formatting exactly") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK_THROWS_AS(parse_double("1.5x"), IoError);
  CHECK_THROWS_AS(parse_int("abc"), IoError);
}

TEST_CASE("grid and region files round-trip") {
  const test::TempDir dir;
  GridSpec g;
  g.origin = Vec3(0.1, 0.2, -0.3);
  g.spacing = 0.125;
  g.dims = {3, 4, 5};
  ScalarGrid3 f(g, 2);
  for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = 0.25 * static_cast<double>(i);
  write_sg3(f, dir.path / "f.sg3");
  const ScalarGrid3 h = read_sg3(dir.path / "f.sg3");
  CHECK(h.spec == g);
  CHECK(h.values == f.values);

  Region3 r(g);
  r.mask[7] = r.mask[20] = 1;
  write_region(r, dir.path / "r.sg3");
  const Region3 q = read_region(dir.path / "r.sg3");
  CHECK(q.mask == r.mask);
  CHECK_THROWS_AS(read_sg3(dir.path / "missing.sg3"), IoError);
}

TEST_CASE("obj files round-trip") {
  const test::TempDir dir;
  const GridSpec g = GridSpec::cube({Vec3::Constant(-1), Vec3::Constant(1)}, 10);
  ScalarGrid3 f(g, 1);
  for (std::size_t n = 0; n < g.node_count(); ++n) f.at(n) = 0.7 - g.position(n).norm();
  const TriangleMesh m = marching_cubes(f, 0.0);
  write_obj(m, dir.path / "m.obj");
  const TriangleMesh k = read_obj(dir.path / "m.obj");
  CHECK(k.triangles == m.triangles);
  CHECK(k.area() == doctest::Approx(m.area()).epsilon(1e-12));
}

TEST_CASE("key-value files ignore comments and blank lines") {
  const test::TempDir dir;
  test::write_text(dir.path / "c.txt", "# comment\n\nalpha = 1\nbeta=two words  \n");
  const KeyValues kv = read_key_values(dir.path / "c.txt");
  CHECK(kv.size() == 2);
  CHECK(kv.at("alpha") == "1");
  CHECK(kv.at("beta") == "two words");
}

}
