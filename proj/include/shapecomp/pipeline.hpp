#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "shapecomp/config.hpp"
#include "shapecomp/evaluation.hpp"
#include "shapecomp/extraction.hpp"
#include "shapecomp/model.hpp"
#include "shapecomp/synthdata.hpp"

namespace shapecomp {

/// Directory layout shared by the subcommands.
struct Workspace {
  std::filesystem::path root;

  /// One directory per sample; ids carry their split as a prefix.
  std::filesystem::path samples() const { return root / "samples"; }
  std::filesystem::path model_dir(Mode m) const { return root / "models" / to_string(m); }
  std::filesystem::path checkpoint(Mode m) const { return model_dir(m) / "model.ckpt"; }
  std::filesystem::path calibration(Mode m) const { return model_dir(m) / "calibration.txt"; }
  std::filesystem::path results_dir(Mode m, const std::string& split) const {
    return root / "results" / to_string(m) / split;
  }
};

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Exceptions are rethrown.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

struct DatasetItem {
  std::string split;
  std::string id;
  int object_index = 0;
  std::uint64_t seed = 0;
};

struct DatasetPlan {
  std::vector<ObjectSpec> objects;
  std::vector<DatasetItem> items;
};

/// Object pool and per-sample seeds. novel-view draws every split from the
/// whole pool; novel-instance assigns 70/10/20% of the objects to
/// train/val/test.
DatasetPlan plan_dataset(const RunConfig& cfg);
/// Object indices owned by a split under the novel-instance rule.
std::vector<int> split_objects(int n_objects, const std::string& split);

void generate_dataset(const RunConfig& cfg, const Workspace& ws);
/// Sample directories of a split, sorted by id.
std::vector<std::filesystem::path> list_samples(const Workspace& ws, const std::string& split);
std::vector<DatasetSample> load_split(const Workspace& ws, const std::string& split, int jobs = 1);

enum class UncertainMethod { gradient, variance, trinary };
std::string to_string(UncertainMethod m);
/// `auto` picks gradient for binary models and trinary for trinary ones.
UncertainMethod resolve_method(const std::string& name, Mode mode);

/// Ground-truth regions of a sample: occupied = object minus uncertain.
struct GroundTruth {
  Region3 occupied;
  Region3 uncertain;
};
GroundTruth ground_truth(const DatasetSample& s);

/// Probability grid on the sample's lattice, normalised by the lattice box.
ScalarGrid3 predict_sample(const OccupancyModel& model, const DatasetSample& s);

struct PredictedRegions {
  Region3 occupied;
  Region3 uncertain;
  TriangleMesh occupied_mesh;
};

PredictedRegions extract_regions(const ScalarGrid3& prob, const ExtractionConfig& cfg, UncertainMethod method,
                                 const ScalarGrid3* variance = nullptr);

void write_calibration(const ExtractionConfig& cfg, const std::filesystem::path& path);
/// Overlays the thresholds stored by write_calibration on `base`.
ExtractionConfig read_calibration(const ExtractionConfig& base, const std::filesystem::path& path);

}  // namespace shapecomp
