#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "shapecomp/extraction.hpp"
#include "shapecomp/grid.hpp"
#include "shapecomp/mesh.hpp"

namespace shapecomp {

struct ClassCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  /// Indices of the false-positive sample points.
  std::vector<std::size_t> fp_points;
};

struct ConfusionCounts {
  ClassCounts occ;
  ClassCounts unc;
  std::size_t total = 0;
};

/// Tests each point against every region mask independently and accumulates
/// one-vs-rest counts per class. Overlapping predicted regions therefore
/// produce overlapping false-positive sets.
ConfusionCounts confusion(const Region3& pred_occ, const Region3& pred_unc, const Region3& gt_occ,
                          const Region3& gt_unc, std::span<const Vec3> points);

/// Bounding box of the set voxels of all regions (cells included), padded
/// by `pad` of its extent; the lattice bounds when every region is empty.
Box3 regions_box(std::span<const Region3* const> regions, double pad = 0.1);

/// Uniform confusion-count samples over regions_box of the four regions.
std::vector<Vec3> confusion_points(const Region3& pred_occ, const Region3& pred_unc, const Region3& gt_occ,
                                   const Region3& gt_unc, std::size_t n, std::uint64_t seed);

/// F1 is 2TP/(2TP+FP+FN). Each flag is false when that metric's
/// denominator was zero, e.g. precision of an empty prediction.
struct SegmentationMetrics {
  double iou = 0.0, f1 = 0.0, precision = 0.0, recall = 0.0;
  bool iou_valid = true, f1_valid = true, precision_valid = true, recall_valid = true;

  bool all_valid() const { return iou_valid && f1_valid && precision_valid && recall_valid; }
};

SegmentationMetrics segmentation_metrics(const ClassCounts& c);

struct GraspRisks {
  double gcr = 0.0, gmr = 0.0, ger = 0.0;
  bool gcr_valid = true, gmr_valid = true, ger_valid = true;
};

/// GCR = (FN_occ+FN_unc)/(TP_occ+FN_occ+TP_unc+FN_unc), GMR = FP_occ/(FP_occ+TP_occ),
/// GER = |FP_occ ∪ FP_unc|/(FP_occ+TN_occ).
GraspRisks grasp_risks(const ConfusionCounts& c);

/// Symmetric mean distance from surface samples of one mesh to the surface of
/// the other, after scaling both meshes so that `reference`'s bounding box has unit largest side.
double chamfer_l1(const TriangleMesh& mesh, const TriangleMesh& reference, std::size_t n_samples,
                  std::uint64_t seed);

struct SampleReport {
  std::string id;
  SegmentationMetrics occ, unc;
  double cd_occ = 0.0, cd_unc = 0.0;  // NaN when a mesh is empty
  GraspRisks risks;
};

struct EvaluationParams {
  std::size_t confusion_samples = 100000;
  std::size_t chamfer_samples = 100000;
  std::uint64_t seed = 0;
};

SampleReport evaluate_regions(const std::string& id, const Region3& pred_occ, const Region3& pred_unc,
                              const Region3& gt_occ, const Region3& gt_unc, const EvaluationParams& params);

/// Per-sample rows plus a trailing `mean` row. The mean skips NaN entries and
/// metrics whose validity flag is false.
void write_report(std::span<const SampleReport> rows, const std::filesystem::path& path);
SampleReport mean_report(std::span<const SampleReport> rows);

// ---------------------------------------------------------------------------
// calibration

struct CalibrationItem {
  ScalarGrid3 prob;  // 1 or 3 channels
  Region3 gt_occ;
  Region3 gt_unc;
};

struct SweepRow {
  std::string parameter;
  double value = 0.0;
  double iou = 0.0;
};

struct CalibrationResult {
  ExtractionConfig config;
  std::vector<SweepRow> sweep;
};

/// {0.05, 0.10, ..., 0.95}.
std::vector<double> default_sweep();

/// Index of the largest value; ties go to the candidate closest to 0.5, then the smaller one.
std::size_t best_sweep_index(std::span<const double> values, std::span<const double> scores);

/// Binary grids: tau on pooled occupied lattice IoU, then tau_u < tau on
/// uncertain IoU. Trinary grids: theta_occ, then theta_unc, with theta_free
/// kept at its base value.
CalibrationResult calibrate(std::span<const CalibrationItem> items, const ExtractionConfig& base,
                            std::span<const double> sweep);

void write_sweep(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

}  // namespace shapecomp
