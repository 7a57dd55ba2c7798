#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "shapecomp/types.hpp"

namespace shapecomp {

/// Regular lattice with isotropic spacing. Node (i,j,k) sits at
/// origin + spacing * (i,j,k); linear index is x-fastest.
struct GridSpec {
  Vec3 origin = Vec3::Zero();
  double spacing = 1.0;
  std::array<int, 3> dims{1, 1, 1};

  static GridSpec cube(const Box3& box, int resolution);

  std::size_t node_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * k);
  }
  std::array<int, 3> unravel(std::size_t idx) const;
  Vec3 position(int i, int j, int k) const { return origin + spacing * Vec3(i, j, k); }
  Vec3 position(std::size_t idx) const;
  /// Box spanned by the node positions.
  Box3 bounds() const;
  /// Nearest node, or nullopt when `p` is more than half a cell outside the lattice.
  std::optional<std::size_t> nearest(const Vec3& p) const;

  bool operator==(const GridSpec& o) const {
    return origin == o.origin && spacing == o.spacing && dims == o.dims;
  }
};

/// Multi-channel scalar field sampled on a GridSpec, channel-interleaved.
struct ScalarGrid3 {
  GridSpec spec;
  int channels = 1;
  std::vector<double> values;

  ScalarGrid3() = default;
  ScalarGrid3(const GridSpec& s, int ch, double fill = 0.0)
      : spec(s), channels(ch), values(s.node_count() * static_cast<std::size_t>(ch), fill) {}

  double& at(std::size_t node, int ch = 0) { return values[node * channels + ch]; }
  double at(std::size_t node, int ch = 0) const { return values[node * channels + ch]; }
  double& at(int i, int j, int k, int ch = 0) { return at(spec.index(i, j, k), ch); }
  double at(int i, int j, int k, int ch = 0) const { return at(spec.index(i, j, k), ch); }

  ScalarGrid3 channel(int ch) const;
  double mean(int ch = 0) const;
  bool all_finite() const;
};

/// Boolean voxel set on a lattice with its 6-connected component structure.
struct Region3 {
  GridSpec spec;
  std::vector<std::uint8_t> mask;
  /// Component id per node, -1 where the mask is unset.
  std::vector<std::int32_t> labels;
  std::vector<std::size_t> component_sizes;

  Region3() = default;
  explicit Region3(const GridSpec& s) : spec(s), mask(s.node_count(), 0) {}

  bool contains(std::size_t node) const { return mask[node] != 0; }
  /// Membership of the nearest node; points off the lattice are outside.
  bool contains_point(const Vec3& p) const;
  std::size_t count() const;
  bool empty() const { return count() == 0; }

  /// Recomputes `labels` and `component_sizes` from `mask`.
  void relabel();
};

Region3 region_union(const Region3& a, const Region3& b);
Region3 region_intersection(const Region3& a, const Region3& b);
Region3 region_difference(const Region3& a, const Region3& b);
/// Float grid holding 1 inside the region and 0 elsewhere.
ScalarGrid3 region_indicator(const Region3& r);

/// Per-node gradient (3 channels, units of value per meter). Central
/// differences in the interior, one-sided differences on boundary faces.
ScalarGrid3 grid_gradient(const ScalarGrid3& grid, int channel = 0);
/// Per-node Euclidean norm of a 3-channel vector grid.
ScalarGrid3 vector_magnitude(const ScalarGrid3& vec);

/// 6-connected labeling; components with fewer than `min_voxels` voxels are
/// cleared. The returned region is labeled.
Region3 connected_components(const Region3& region, std::size_t min_voxels);

/// Deterministic uniform samples in a box.
std::vector<Vec3> sample_points(const Box3& box, std::size_t n, std::uint64_t seed);

}  // namespace shapecomp
