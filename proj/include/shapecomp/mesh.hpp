#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "shapecomp/grid.hpp"
#include "shapecomp/types.hpp"

namespace shapecomp {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  bool empty() const { return triangles.empty(); }
  Vec3 normal(std::size_t tri) const;  // unnormalized, length = 2 * area
  double area() const;
  /// Signed volume by the divergence theorem; positive for outward-oriented closed meshes.
  double enclosed_volume() const;
  Box3 bounds() const;
  /// Every undirected edge shared by exactly two triangles with opposite orientation.
  bool is_watertight() const;
  /// Drops triangles with repeated indices or area below `min_area`.
  void remove_degenerate(double min_area = 1e-12);
};

struct SurfaceSample {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
};

/// Area-weighted uniform samples on the mesh surface with face normals.
SurfaceSample sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed);

/// Classic lattice-cell isosurface extraction. Nodes with value >= iso count
/// as inside; triangles are wound so normals face the outside (< iso) side.
TriangleMesh marching_cubes(const ScalarGrid3& grid, double iso, int channel = 0);

/// Triangles emitted by the case table for one cube configuration; bit c of
/// `config` is set when corner c (x = c&1, y = c>>1&1, z = c>>2&1) is inside.
/// Each triangle is three cube-edge ids in [0,12).
const std::vector<std::array<int, 3>>& marching_cubes_case(int config);

void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path);
TriangleMesh read_obj(const std::filesystem::path& path);

}  // namespace shapecomp
