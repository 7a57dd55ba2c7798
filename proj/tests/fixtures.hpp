#pragma once

#include <cmath>

#include "shapecomp/grid.hpp"

namespace test {

/// Probability field with a steep logistic shell around a cube-shaped body
/// and a separate flat plateau of value `plateau_value`, which is the only
/// low-gradient structure inside the band [0.1, 0.5). The plateau has a
/// one-voxel skirt at 0.08, below the band, which softens its edges.
struct ShellPlateau {
  shapecomp::ScalarGrid3 prob;
  shapecomp::Region3 plateau;
  shapecomp::Region3 body;  // nodes with probability >= 0.5
};

inline ShellPlateau shell_plateau(int n = 24, double plateau_value = 0.15, double steepness = 0.3) {
  using namespace shapecomp;
  GridSpec g;
  g.spacing = 1.0 / n;
  g.dims = {n, n, n};
  ShellPlateau out{ScalarGrid3(g, 1), Region3(g), Region3(g)};
  const double h = g.spacing;
  // Body: axis-aligned cube [2h, 15.5h]^3 expressed as a signed box distance.
  const double lo = 2 * h, hi = 15.5 * h;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const Vec3 p = g.position(i, j, k);
        double d = -1e9;  // box distance along the worst axis, negative inside
        for (int a = 0; a < 3; ++a) d = std::max(d, std::max(lo - p[a], p[a] - hi));
        const double y = 1.0 / (1.0 + std::exp(d / (steepness * h)));
        const std::size_t idx = g.index(i, j, k);
        out.prob.at(idx) = y;
        // Plateau: a slab beside the body, separated from it by free nodes.
        if (i >= 18 && i <= 23 && j >= 3 && j <= 10 && k >= 3 && k <= 10) out.prob.at(idx) = 0.08;
        if (i >= 19 && i <= 22 && j >= 4 && j <= 9 && k >= 4 && k <= 9) {
          out.prob.at(idx) = plateau_value;
          out.plateau.mask[idx] = 1;
        }
        if (out.prob.at(idx) >= 0.5) out.body.mask[idx] = 1;
      }
  out.plateau.relabel();
  out.body.relabel();
  return out;
}

}  // namespace test
