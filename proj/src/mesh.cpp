#include "shapecomp/mesh.hpp"

#include "shapecomp/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

namespace shapecomp {

Vec3 TriangleMesh::normal(std::size_t tri) const {
  const auto& t = triangles[tri];
  return (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
}

double TriangleMesh::area() const {
  double a = 0.0;
  for (std::size_t i = 0; i < triangles.size(); ++i) a += 0.5 * normal(i).norm();
  return a;
}

double TriangleMesh::enclosed_volume() const {
  double v = 0.0;
  for (const auto& t : triangles) v += vertices[t[0]].dot(vertices[t[1]].cross(vertices[t[2]])) / 6.0;
  return v;
}

Box3 TriangleMesh::bounds() const {
  if (vertices.empty()) return {};
  Box3 b{vertices.front(), vertices.front()};
  for (const auto& v : vertices) {
    b.lo = b.lo.cwiseMin(v);
    b.hi = b.hi.cwiseMax(v);
  }
  return b;
}

bool TriangleMesh::is_watertight() const {
  // directed edge -> count; a closed oriented 2-manifold uses each directed edge once
  // and always together with its reverse.
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
  for (const auto& t : triangles)
    for (int e = 0; e < 3; ++e) ++directed[{t[e], t[(e + 1) % 3]}];
  for (const auto& [edge, count] : directed) {
    if (count != 1) return false;
    const auto rev = directed.find({edge.second, edge.first});
    if (rev == directed.end() || rev->second != 1) return false;
  }
  return true;
}

void TriangleMesh::remove_degenerate(double min_area) {
  std::erase_if(triangles, [&](const auto& t) {
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) return true;
    const Vec3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
    return 0.5 * n.norm() < min_area;
  });
}

SurfaceSample sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
  if (mesh.empty()) throw std::invalid_argument("sample_surface: empty mesh");
  std::vector<double> cdf(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    total += 0.5 * mesh.normal(i).norm();
    cdf[i] = total;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SurfaceSample s;
  s.points.reserve(n);
  s.normals.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double r = u(rng) * total;
    std::size_t tri = static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
    tri = std::min(tri, cdf.size() - 1);
    double a = u(rng), b = u(rng);
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    const auto& t = mesh.triangles[tri];
    const Vec3& p0 = mesh.vertices[t[0]];
    s.points.push_back(p0 + a * (mesh.vertices[t[1]] - p0) + b * (mesh.vertices[t[2]] - p0));
    Vec3 nrm = mesh.normal(tri);
    const double len = nrm.norm();
    s.normals.push_back(len > 0 ? Vec3(nrm / len) : Vec3::UnitZ());
  }
  return s;
}

namespace {

constexpr std::array<int, 3> corner_offset(int c) { return {c & 1, (c >> 1) & 1, (c >> 2) & 1}; }

struct CubeTopology {
  // edge e joins corners edge_corners[e][0] (lower) and [1], along edge_axis[e]
  std::array<std::array<int, 2>, 12> edge_corners{};
  std::array<int, 12> edge_axis{};
  std::array<std::array<int, 4>, 6> face_cycles{};  // counter-clockwise seen from outside
  std::array<std::vector<std::array<int, 3>>, 256> cases;

  int edge_between(int a, int b) const {
    for (int e = 0; e < 12; ++e) {
      const auto& ec = edge_corners[e];
      if ((ec[0] == a && ec[1] == b) || (ec[0] == b && ec[1] == a)) return e;
    }
    throw std::logic_error("corners are not adjacent");
  }

  CubeTopology() {
    int e = 0;
    for (int axis = 0; axis < 3; ++axis)
      for (int c = 0; c < 8; ++c)
        if (!(c & (1 << axis))) {
          edge_corners[e] = {c, c | (1 << axis)};
          edge_axis[e] = axis;
          ++e;
        }

    int f = 0;
    for (int axis = 0; axis < 3; ++axis) {
      for (int side = 0; side < 2; ++side) {
        std::vector<int> cs;
        for (int c = 0; c < 8; ++c)
          if (((c >> axis) & 1) == side) cs.push_back(c);
        Vec3 outward = Vec3::Zero();
        outward[axis] = side ? 1.0 : -1.0;
        const Vec3 center(0.5, 0.5, 0.5);
        Vec3 u = Vec3::Zero();
        u[(axis + 1) % 3] = 1.0;
        const Vec3 v = outward.cross(u);
        std::sort(cs.begin(), cs.end(), [&](int a, int b) {
          const auto oa = corner_offset(a), ob = corner_offset(b);
          const Vec3 pa = Vec3(oa[0], oa[1], oa[2]) - center;
          const Vec3 pb = Vec3(ob[0], ob[1], ob[2]) - center;
          return std::atan2(pa.dot(v), pa.dot(u)) < std::atan2(pb.dot(v), pb.dot(u));
        });
        face_cycles[f++] = {cs[0], cs[1], cs[2], cs[3]};
      }
    }

    for (int config = 0; config < 256; ++config) cases[config] = triangulate(config);

    // Orient so that the single-corner case faces away from the inside corner.
    const auto& t = cases[1].front();
    const auto mid = [&](int edge) {
      const auto a = corner_offset(edge_corners[edge][0]);
      const auto b = corner_offset(edge_corners[edge][1]);
      return Vec3(0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2]));
    };
    const Vec3 n = (mid(t[1]) - mid(t[0])).cross(mid(t[2]) - mid(t[0]));
    if (n.dot(Vec3(1, 1, 1)) < 0)
      for (auto& tris : cases)
        for (auto& tri : tris) std::swap(tri[1], tri[2]);
  }

  std::vector<std::array<int, 3>> triangulate(int config) const {
    const auto inside = [&](int c) { return (config >> c) & 1; };
    std::array<int, 12> next;
    next.fill(-1);
    for (const auto& cyc : face_cycles) {
      // crossings in counter-clockwise order; entering = outside -> inside
      std::vector<std::pair<int, bool>> crossings;
      for (int i = 0; i < 4; ++i) {
        const int a = cyc[i], b = cyc[(i + 1) % 4];
        if (inside(a) != inside(b)) crossings.emplace_back(edge_between(a, b), !inside(a));
      }
      // Each inside run starts at an entering crossing and ends at the next
      // leaving one; on ambiguous faces this keeps inside corners separated.
      const int m = static_cast<int>(crossings.size());
      for (int i = 0; i < m; ++i) {
        if (!crossings[i].second) continue;
        const int j = (i + 1) % m;
        next[crossings[i].first] = crossings[j].first;
      }
    }
    std::vector<std::array<int, 3>> tris;
    std::array<bool, 12> used{};
    for (int start = 0; start < 12; ++start) {
      if (next[start] < 0 || used[start]) continue;
      std::vector<int> loop;
      for (int e = start; !used[e]; e = next[e]) {
        used[e] = true;
        loop.push_back(e);
      }
      for (std::size_t k = 1; k + 1 < loop.size(); ++k) tris.push_back({loop[0], loop[k], loop[k + 1]});
    }
    return tris;
  }
};

const CubeTopology& topology() {
  static const CubeTopology topo;
  return topo;
}

}  // namespace

const std::vector<std::array<int, 3>>& marching_cubes_case(int config) {
  if (config < 0 || config > 255) throw std::out_of_range("marching cubes config");
  return topology().cases[config];
}

TriangleMesh marching_cubes(const ScalarGrid3& grid, double iso, int channel) {
  const auto& spec = grid.spec;
  const auto& d = spec.dims;
  if (d[0] < 2 || d[1] < 2 || d[2] < 2) throw std::invalid_argument("marching_cubes needs >= 2 nodes per axis");
  const auto& topo = topology();
  constexpr double snap_eps = 1e-12;

  TriangleMesh mesh;
  const std::size_t n_nodes = spec.node_count();
  std::vector<std::int32_t> edge_vertex(3 * n_nodes, -1);
  std::vector<std::int32_t> node_vertex(n_nodes, -1);

  const auto vertex_on_edge = [&](std::size_t na, std::size_t nb, int axis) -> std::uint32_t {
    const double fa = grid.at(na, channel), fb = grid.at(nb, channel);
    const auto node_vert = [&](std::size_t n) {
      if (node_vertex[n] < 0) {
        node_vertex[n] = static_cast<std::int32_t>(mesh.vertices.size());
        mesh.vertices.push_back(spec.position(n));
      }
      return static_cast<std::uint32_t>(node_vertex[n]);
    };
    if (std::abs(fa - iso) < snap_eps) return node_vert(na);
    if (std::abs(fb - iso) < snap_eps) return node_vert(nb);
    auto& slot = edge_vertex[3 * na + axis];
    if (slot < 0) {
      const double t = (iso - fa) / (fb - fa);
      slot = static_cast<std::int32_t>(mesh.vertices.size());
      const Vec3 pa = spec.position(na), pb = spec.position(nb);
      mesh.vertices.push_back(pa + t * (pb - pa));
    }
    return static_cast<std::uint32_t>(slot);
  };

  for (int k = 0; k + 1 < d[2]; ++k) {
    for (int j = 0; j + 1 < d[1]; ++j) {
      for (int i = 0; i + 1 < d[0]; ++i) {
        std::array<std::size_t, 8> nodes{};
        int config = 0;
        for (int c = 0; c < 8; ++c) {
          const auto o = corner_offset(c);
          nodes[c] = spec.index(i + o[0], j + o[1], k + o[2]);
          if (grid.at(nodes[c], channel) >= iso) config |= 1 << c;
        }
        const auto& tris = topo.cases[config];
        if (tris.empty()) continue;
        std::array<std::int64_t, 12> local;
        local.fill(-1);
        for (const auto& tri : tris) {
          std::array<std::uint32_t, 3> out{};
          for (int v = 0; v < 3; ++v) {
            const int e = tri[v];
            if (local[e] < 0) {
              const auto& ec = topo.edge_corners[e];
              local[e] = vertex_on_edge(nodes[ec[0]], nodes[ec[1]], topo.edge_axis[e]);
            }
            out[v] = static_cast<std::uint32_t>(local[e]);
          }
          mesh.triangles.push_back(out);
        }
      }
    }
  }
  mesh.remove_degenerate();
  return mesh;
}

void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& v : mesh.vertices)
    out << "v " << format_double(v.x()) << ' ' << format_double(v.y()) << ' ' << format_double(v.z()) << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

TriangleMesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  TriangleMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3 v;
      for (int a = 0; a < 3; ++a) {
        std::string tok;
        ls >> tok;
        v[a] = parse_double(tok);
      }
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::array<std::uint32_t, 3> t{};
      for (auto& idx : t) {
        std::string tok;
        ls >> tok;
        const long long k = parse_int(tok.substr(0, tok.find('/')));
        if (k < 1) throw IoError("bad face index in " + path.string());
        idx = static_cast<std::uint32_t>(k - 1);
      }
      mesh.triangles.push_back(t);
    }
  }
  return mesh;
}

}  // namespace shapecomp
