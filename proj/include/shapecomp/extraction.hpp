#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "shapecomp/grid.hpp"
#include "shapecomp/mesh.hpp"

namespace shapecomp {

/// How low-probability nodes become uncertain candidates in the binary and
/// variance methods.
enum class UncertainRule {
  band,   // tau_u <= y < tau
  below,  // y < tau_u
};

std::string to_string(UncertainRule r);
UncertainRule parse_uncertain_rule(const std::string& s);

struct ExtractionConfig {
  double tau = 0.5;
  double tau_u = 0.1;
  UncertainRule rule = UncertainRule::band;
  /// Trinary per-class thresholds {free, occupied, uncertain}; scores are p_c / theta_c.
  std::array<double, 3> theta{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  /// Components smaller than this are dropped; negative selects 0.1% of the grid.
  long long min_voxels = -1;
  bool filter_occupied = true;

  /// Throws std::invalid_argument unless 0 < tau_u < tau < 1 and all theta > 0.
  void validate() const;
  std::size_t min_voxels_for(const GridSpec& grid) const;
};

struct OccupiedExtraction {
  Region3 region;
  TriangleMesh mesh;
};

/// {y >= tau} with components below `min_voxels` removed; channel 1 of a 3-channel grid.
Region3 occupied_region(const ScalarGrid3& prob_grid, double tau, std::size_t min_voxels = 0);

/// occupied_region() and the isosurface at tau.
OccupiedExtraction extract_occupied(const ScalarGrid3& prob_grid, double tau, std::size_t min_voxels = 0);
OccupiedExtraction extract_occupied(const ScalarGrid3& prob_grid, const ExtractionConfig& cfg);

/// Low-probability candidates whose gradient magnitude is below the grid mean.
Region3 extract_uncertain_binary(const ScalarGrid3& prob_grid, const ExtractionConfig& cfg);
/// Same, with a precomputed |grad y| grid.
Region3 extract_uncertain_binary(const ScalarGrid3& prob_grid, const ScalarGrid3& grad_magnitude,
                                 const ExtractionConfig& cfg);

/// Index of the largest p_c / theta_c; ties resolve to the lower class index.
int calibrated_argmax(const std::array<double, 3>& probs, const std::array<double, 3>& theta);

/// Per-node calibrated-argmax class of a 3-channel grid.
std::vector<std::uint8_t> trinary_labels(const ScalarGrid3& prob3, const std::array<double, 3>& theta);
Region3 extract_uncertain_trinary(const ScalarGrid3& prob3, const ExtractionConfig& cfg);
Region3 extract_occupied_trinary(const ScalarGrid3& prob3, const ExtractionConfig& cfg);

/// Low-probability candidates whose dropout variance is strictly above the grid mean.
Region3 extract_uncertain_variance(const ScalarGrid3& prob_grid, const ScalarGrid3& var_grid,
                                   const ExtractionConfig& cfg);

/// Marching-cubes surface of a region's 0/1 indicator.
TriangleMesh region_mesh(const Region3& region);

void write_extraction_params(const ExtractionConfig& cfg, const std::string& method,
                             const std::filesystem::path& path);

}  // namespace shapecomp
