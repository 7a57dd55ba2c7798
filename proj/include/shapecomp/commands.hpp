#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "shapecomp/config.hpp"
#include "shapecomp/evaluation.hpp"
#include "shapecomp/pipeline.hpp"

namespace shapecomp {

// Subcommand bodies. Each reads its inputs from the workspace, writes its
// outputs plus the resolved config next to them, and reports progress on `log`.

void cmd_gen(const RunConfig& cfg, const Workspace& ws, std::ostream& log);

TrainResult cmd_train(const RunConfig& cfg, const Workspace& ws, std::ostream& log);

CalibrationResult cmd_calibrate(const RunConfig& cfg, const Workspace& ws, std::ostream& log);

/// Extraction settings for the configured mode, with the calibrate step's
/// thresholds applied when use_calibration is set and they exist.
ExtractionConfig resolved_extraction(const RunConfig& cfg, const Workspace& ws);

void cmd_extract(const RunConfig& cfg, const Workspace& ws, std::ostream& log);

/// Returns the mean row of the written report.
SampleReport cmd_eval(const RunConfig& cfg, const Workspace& ws, std::ostream& log);

struct GraspSceneSummary {
  std::string id;
  std::size_t candidates = 0;
  std::size_t kept = 0;
  double collision_before = 0.0;  // NaN without candidates
  double collision_after = 0.0;   // NaN when every candidate was removed
  bool failure = false;
};

std::vector<GraspSceneSummary> cmd_grasp(const RunConfig& cfg, const Workspace& ws, std::ostream& log);

}  // namespace shapecomp
