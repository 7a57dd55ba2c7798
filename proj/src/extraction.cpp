#include "shapecomp/extraction.hpp"

#include <cmath>
#include <stdexcept>

#include "shapecomp/io.hpp"

namespace shapecomp {

namespace {

double grid_mean(const ScalarGrid3& g) { return g.mean(0); }

bool candidate(double y, const ExtractionConfig& cfg) {
  return cfg.rule == UncertainRule::band ? (y >= cfg.tau_u && y < cfg.tau) : y < cfg.tau_u;
}

void require_channels(const ScalarGrid3& g, int channels, const char* what) {
  if (g.channels != channels)
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(channels) + " channel grid");
}

Region3 finish(Region3 r, std::size_t min_voxels) {
  r.relabel();
  return min_voxels > 0 ? connected_components(r, min_voxels) : r;
}

}  // namespace

std::string to_string(UncertainRule r) { return r == UncertainRule::band ? "band" : "below"; }

UncertainRule parse_uncertain_rule(const std::string& s) {
  if (s == "band") return UncertainRule::band;
  if (s == "below") return UncertainRule::below;
  throw std::invalid_argument("unknown uncertain rule '" + s + "' (expected band or below)");
}

void ExtractionConfig::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must be in (0, 1)");
  if (!(tau_u > 0.0 && tau_u < tau)) throw std::invalid_argument("tau_u must be in (0, tau)");
  for (double t : theta)
    if (!(t > 0.0)) throw std::invalid_argument("trinary thresholds must be > 0");
}

std::size_t ExtractionConfig::min_voxels_for(const GridSpec& grid) const {
  if (min_voxels >= 0) return static_cast<std::size_t>(min_voxels);
  return static_cast<std::size_t>(std::llround(0.001 * static_cast<double>(grid.node_count())));
}

Region3 occupied_region(const ScalarGrid3& prob_grid, double tau, std::size_t min_voxels) {
  if (prob_grid.channels != 1 && prob_grid.channels != 3)
    throw std::invalid_argument("occupied_region: expected 1 or 3 channel grid");
  const int ch = prob_grid.channels == 1 ? 0 : 1;
  Region3 r(prob_grid.spec);
  for (std::size_t i = 0; i < r.mask.size(); ++i) r.mask[i] = prob_grid.at(i, ch) >= tau ? 1 : 0;
  return finish(std::move(r), min_voxels);
}

OccupiedExtraction extract_occupied(const ScalarGrid3& prob_grid, double tau, std::size_t min_voxels) {
  return {occupied_region(prob_grid, tau, min_voxels),
          marching_cubes(prob_grid, tau, prob_grid.channels == 1 ? 0 : 1)};
}

OccupiedExtraction extract_occupied(const ScalarGrid3& prob_grid, const ExtractionConfig& cfg) {
  require_channels(prob_grid, 1, "extract_occupied");
  return extract_occupied(prob_grid, cfg.tau, cfg.filter_occupied ? cfg.min_voxels_for(prob_grid.spec) : 0);
}

Region3 extract_uncertain_binary(const ScalarGrid3& prob_grid, const ScalarGrid3& grad_magnitude,
                                 const ExtractionConfig& cfg) {
  require_channels(prob_grid, 1, "extract_uncertain_binary");
  if (!(grad_magnitude.spec == prob_grid.spec)) throw std::invalid_argument("extract_uncertain_binary: lattice mismatch");
  const double mean_grad = grid_mean(grad_magnitude);
  Region3 r(prob_grid.spec);
  for (std::size_t i = 0; i < r.mask.size(); ++i)
    r.mask[i] = candidate(prob_grid.values[i], cfg) && grad_magnitude.values[i] < mean_grad ? 1 : 0;
  return finish(std::move(r), cfg.min_voxels_for(prob_grid.spec));
}

Region3 extract_uncertain_binary(const ScalarGrid3& prob_grid, const ExtractionConfig& cfg) {
  require_channels(prob_grid, 1, "extract_uncertain_binary");
  return extract_uncertain_binary(prob_grid, vector_magnitude(grid_gradient(prob_grid)), cfg);
}

int calibrated_argmax(const std::array<double, 3>& probs, const std::array<double, 3>& theta) {
  int best = 0;
  double best_score = probs[0] / theta[0];
  for (int c = 1; c < 3; ++c) {
    const double s = probs[c] / theta[c];
    if (s > best_score) {
      best_score = s;
      best = c;
    }
  }
  return best;
}

std::vector<std::uint8_t> trinary_labels(const ScalarGrid3& prob3, const std::array<double, 3>& theta) {
  require_channels(prob3, 3, "trinary_labels");
  std::vector<std::uint8_t> labels(prob3.spec.node_count());
  for (std::size_t i = 0; i < labels.size(); ++i)
    labels[i] = static_cast<std::uint8_t>(
        calibrated_argmax({prob3.at(i, 0), prob3.at(i, 1), prob3.at(i, 2)}, theta));
  return labels;
}

Region3 extract_uncertain_trinary(const ScalarGrid3& prob3, const ExtractionConfig& cfg) {
  const auto labels = trinary_labels(prob3, cfg.theta);
  Region3 r(prob3.spec);
  for (std::size_t i = 0; i < labels.size(); ++i) r.mask[i] = labels[i] == 2 ? 1 : 0;
  return finish(std::move(r), cfg.min_voxels_for(prob3.spec));
}

Region3 extract_occupied_trinary(const ScalarGrid3& prob3, const ExtractionConfig& cfg) {
  const auto labels = trinary_labels(prob3, cfg.theta);
  Region3 r(prob3.spec);
  for (std::size_t i = 0; i < labels.size(); ++i) r.mask[i] = labels[i] == 1 ? 1 : 0;
  return finish(std::move(r), cfg.filter_occupied ? cfg.min_voxels_for(prob3.spec) : 0);
}

Region3 extract_uncertain_variance(const ScalarGrid3& prob_grid, const ScalarGrid3& var_grid,
                                   const ExtractionConfig& cfg) {
  const ScalarGrid3 y = prob_grid.channels == 1 ? prob_grid : prob_grid.channel(1);
  require_channels(var_grid, 1, "extract_uncertain_variance");
  if (!(var_grid.spec == y.spec)) throw std::invalid_argument("extract_uncertain_variance: lattice mismatch");
  const double mean_var = grid_mean(var_grid);
  Region3 r(y.spec);
  for (std::size_t i = 0; i < r.mask.size(); ++i)
    r.mask[i] = candidate(y.values[i], cfg) && var_grid.values[i] > mean_var ? 1 : 0;
  return finish(std::move(r), cfg.min_voxels_for(y.spec));
}

TriangleMesh region_mesh(const Region3& region) {
  if (region.spec.dims[0] < 2 || region.spec.dims[1] < 2 || region.spec.dims[2] < 2) return {};
  return marching_cubes(region_indicator(region), 0.5);
}

void write_extraction_params(const ExtractionConfig& cfg, const std::string& method,
                             const std::filesystem::path& path) {
  KeyValues kv;
  kv["method"] = method;
  kv["tau"] = format_double(cfg.tau);
  kv["tau_u"] = format_double(cfg.tau_u);
  kv["uncertain_rule"] = to_string(cfg.rule);
  kv["theta_free"] = format_double(cfg.theta[0]);
  kv["theta_occ"] = format_double(cfg.theta[1]);
  kv["theta_unc"] = format_double(cfg.theta[2]);
  kv["min_voxels"] = std::to_string(cfg.min_voxels);
  kv["filter_occupied"] = cfg.filter_occupied ? "1" : "0";
  write_key_values(kv, path);
}

}  // namespace shapecomp
