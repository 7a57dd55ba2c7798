#include "shapecomp/grid.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace shapecomp {

GridSpec GridSpec::cube(const Box3& box, int resolution) {
  if (resolution < 2) throw std::invalid_argument("grid resolution must be >= 2");
  const Vec3 ext = box.extent();
  const double side = ext.maxCoeff();
  GridSpec g;
  g.spacing = side / (resolution - 1);
  g.origin = box.center() - Vec3::Constant(0.5 * side);
  g.dims = {resolution, resolution, resolution};
  return g;
}

std::array<int, 3> GridSpec::unravel(std::size_t idx) const {
  const int i = static_cast<int>(idx % dims[0]);
  idx /= dims[0];
  const int j = static_cast<int>(idx % dims[1]);
  const int k = static_cast<int>(idx / dims[1]);
  return {i, j, k};
}

Vec3 GridSpec::position(std::size_t idx) const {
  const auto [i, j, k] = unravel(idx);
  return position(i, j, k);
}

Box3 GridSpec::bounds() const {
  return {origin, origin + spacing * Vec3(dims[0] - 1, dims[1] - 1, dims[2] - 1)};
}

std::optional<std::size_t> GridSpec::nearest(const Vec3& p) const {
  std::array<int, 3> ijk{};
  for (int a = 0; a < 3; ++a) {
    const double f = (p[a] - origin[a]) / spacing;
    const long r = std::lround(f);
    if (f < -0.5 || f > dims[a] - 0.5) return std::nullopt;
    ijk[a] = static_cast<int>(std::clamp<long>(r, 0, dims[a] - 1));
  }
  return index(ijk[0], ijk[1], ijk[2]);
}

ScalarGrid3 ScalarGrid3::channel(int ch) const {
  ScalarGrid3 out(spec, 1);
  for (std::size_t n = 0; n < spec.node_count(); ++n) out.values[n] = at(n, ch);
  return out;
}

double ScalarGrid3::mean(int ch) const {
  const std::size_t n = spec.node_count();
  if (n == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += at(i, ch);
  return s / static_cast<double>(n);
}

bool ScalarGrid3::all_finite() const {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

bool Region3::contains_point(const Vec3& p) const {
  const auto n = spec.nearest(p);
  return n && mask[*n] != 0;
}

std::size_t Region3::count() const {
  std::size_t c = 0;
  for (auto m : mask) c += m != 0;
  return c;
}

namespace {

void check_same_lattice(const Region3& a, const Region3& b) {
  if (!(a.spec == b.spec)) throw std::invalid_argument("regions are on different lattices");
}

template <typename Op>
Region3 combine(const Region3& a, const Region3& b, Op op) {
  check_same_lattice(a, b);
  Region3 out(a.spec);
  for (std::size_t i = 0; i < out.mask.size(); ++i) out.mask[i] = op(a.mask[i] != 0, b.mask[i] != 0) ? 1 : 0;
  out.relabel();
  return out;
}

}  // namespace

Region3 region_union(const Region3& a, const Region3& b) {
  return combine(a, b, [](bool x, bool y) { return x || y; });
}
Region3 region_intersection(const Region3& a, const Region3& b) {
  return combine(a, b, [](bool x, bool y) { return x && y; });
}
Region3 region_difference(const Region3& a, const Region3& b) {
  return combine(a, b, [](bool x, bool y) { return x && !y; });
}

ScalarGrid3 region_indicator(const Region3& r) {
  ScalarGrid3 g(r.spec, 1);
  for (std::size_t i = 0; i < r.mask.size(); ++i) g.values[i] = r.mask[i] ? 1.0 : 0.0;
  return g;
}

void Region3::relabel() {
  const auto& d = spec.dims;
  labels.assign(mask.size(), -1);
  component_sizes.clear();
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < mask.size(); ++seed) {
    if (!mask[seed] || labels[seed] >= 0) continue;
    const auto id = static_cast<std::int32_t>(component_sizes.size());
    std::size_t size = 0;
    labels[seed] = id;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      ++size;
      const auto [i, j, k] = spec.unravel(cur);
      const std::array<std::array<int, 3>, 6> nbrs{{{i - 1, j, k}, {i + 1, j, k}, {i, j - 1, k},
                                                     {i, j + 1, k}, {i, j, k - 1}, {i, j, k + 1}}};
      for (const auto& n : nbrs) {
        if (n[0] < 0 || n[1] < 0 || n[2] < 0 || n[0] >= d[0] || n[1] >= d[1] || n[2] >= d[2]) continue;
        const std::size_t ni = spec.index(n[0], n[1], n[2]);
        if (mask[ni] && labels[ni] < 0) {
          labels[ni] = id;
          stack.push_back(ni);
        }
      }
    }
    component_sizes.push_back(size);
  }
}

Region3 connected_components(const Region3& region, std::size_t min_voxels) {
  Region3 labeled = region;
  labeled.relabel();
  bool any_removed = false;
  for (std::size_t i = 0; i < labeled.mask.size(); ++i) {
    const auto l = labeled.labels[i];
    if (l >= 0 && labeled.component_sizes[l] < min_voxels) {
      labeled.mask[i] = 0;
      any_removed = true;
    }
  }
  if (any_removed) labeled.relabel();
  return labeled;
}

ScalarGrid3 grid_gradient(const ScalarGrid3& grid, int channel) {
  const auto& d = grid.spec.dims;
  for (int a = 0; a < 3; ++a)
    if (d[a] < 2) throw std::invalid_argument("grid_gradient needs at least 2 nodes per axis");
  const double h = grid.spec.spacing;
  ScalarGrid3 out(grid.spec, 3);
  for (int k = 0; k < d[2]; ++k) {
    for (int j = 0; j < d[1]; ++j) {
      for (int i = 0; i < d[0]; ++i) {
        const std::array<int, 3> ijk{i, j, k};
        const std::size_t node = grid.spec.index(i, j, k);
        for (int a = 0; a < 3; ++a) {
          auto lo = ijk;
          auto hi = ijk;
          double denom = 2.0 * h;
          if (ijk[a] == 0) {
            hi[a] += 1;
            denom = h;
          } else if (ijk[a] == d[a] - 1) {
            lo[a] -= 1;
            denom = h;
          } else {
            lo[a] -= 1;
            hi[a] += 1;
          }
          out.at(node, a) = (grid.at(hi[0], hi[1], hi[2], channel) - grid.at(lo[0], lo[1], lo[2], channel)) / denom;
        }
      }
    }
  }
  return out;
}

ScalarGrid3 vector_magnitude(const ScalarGrid3& vec) {
  if (vec.channels != 3) throw std::invalid_argument("vector_magnitude expects 3 channels");
  ScalarGrid3 out(vec.spec, 1);
  for (std::size_t n = 0; n < vec.spec.node_count(); ++n)
    out.values[n] = std::sqrt(vec.at(n, 0) * vec.at(n, 0) + vec.at(n, 1) * vec.at(n, 1) + vec.at(n, 2) * vec.at(n, 2));
  return out;
}

std::vector<Vec3> sample_points(const Box3& box, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("sample_points: n must be > 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec3 ext = box.extent();
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = u(rng), y = u(rng), z = u(rng);
    pts.emplace_back(box.lo + Vec3(x * ext[0], y * ext[1], z * ext[2]));
  }
  return pts;
}

}  // namespace shapecomp
