#include "shapecomp/commands.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>

#include "shapecomp/grasping.hpp"
#include "shapecomp/rng.hpp"

namespace shapecomp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Mode config_mode(const RunConfig& cfg) { return parse_mode(cfg.get("model_mode")); }

int config_jobs(const RunConfig& cfg) { return static_cast<int>(cfg.get_int("jobs")); }

OccupancyModel load_model(const RunConfig& cfg, const Workspace& ws) {
  const Mode mode = config_mode(cfg);
  const auto path = ws.checkpoint(mode);
  if (!std::filesystem::exists(path)) throw IoError("missing checkpoint " + path.string() + " (run train first)");
  OccupancyModel model = read_checkpoint(path);
  if (model.config.mode != mode)
    throw ConfigError("checkpoint " + path.string() + " holds a " + to_string(model.config.mode) + " model");
  return model;
}

std::vector<DatasetSample> require_split(const RunConfig& cfg, const Workspace& ws, const std::string& split) {
  auto samples = load_split(ws, split, config_jobs(cfg));
  if (samples.empty()) throw IoError("no '" + split + "' samples under " + ws.samples().string());
  return samples;
}

std::string fmt(double v) { return std::isnan(v) ? "nan" : format_double(v); }

}  // namespace

void cmd_gen(const RunConfig& cfg, const Workspace& ws, std::ostream& log) {
  validate(cfg);
  generate_dataset(cfg, ws);
  log << "gen: " << plan_dataset(cfg).items.size() << " samples in " << ws.samples().string() << '\n';
}

TrainResult cmd_train(const RunConfig& cfg, const Workspace& ws, std::ostream& log) {
  validate(cfg);
  const ModelConfig mcfg = model_config(cfg);
  const auto train_raw = require_split(cfg, ws, "train");
  const auto val_raw = require_split(cfg, ws, "val");
  std::vector<TrainingSample> train_set, val_set;
  for (const auto& s : train_raw) train_set.push_back(make_training_sample(s, mcfg.mode));
  for (const auto& s : val_raw) val_set.push_back(make_training_sample(s, mcfg.mode));

  log << "train: " << to_string(mcfg.mode) << ", " << train_set.size() << " train / " << val_set.size()
      << " val samples, " << mcfg.parameter_count() << " parameters\n";
  TrainResult result = train(train_set, val_set, mcfg, train_config(cfg), [&](const EpochLog& e) {
    log << "  epoch " << e.epoch << "  train " << format_double(e.train_loss) << "  val "
        << format_double(e.val_loss) << '\n'
        << std::flush;
  });

  const auto dir = ws.model_dir(mcfg.mode);
  std::filesystem::create_directories(dir);
  write_checkpoint(result.model, ws.checkpoint(mcfg.mode));
  write_training_log(result.log, dir / "train_log.csv");
  cfg.write(dir / "config.txt");
  log << "train: best epoch " << result.best_epoch << (result.stopped_early ? " (early stop)" : "") << '\n';
  return result;
}

CalibrationResult cmd_calibrate(const RunConfig& cfg, const Workspace& ws, std::ostream& log) {
  validate(cfg);
  const OccupancyModel model = load_model(cfg, ws);
  const auto samples = require_split(cfg, ws, "val");
  std::vector<CalibrationItem> items(samples.size());
  parallel_for(samples.size(), config_jobs(cfg), [&](std::size_t i) {
    const GroundTruth gt = ground_truth(samples[i]);
    items[i] = {predict_sample(model, samples[i]), gt.occupied, gt.uncertain};
  });
  const std::vector<double> sweep = sweep_values(cfg);
  CalibrationResult result = calibrate(items, extraction_config(cfg), sweep);

  const Mode mode = model.config.mode;
  const auto dir = ws.model_dir(mode);
  write_sweep(result.sweep, dir / "calibration.csv");
  write_calibration(result.config, ws.calibration(mode));
  cfg.write(dir / "calibration_config.txt");
  if (mode == Mode::binary)
    log << "calibrate: tau " << format_double(result.config.tau) << ", tau_u " << format_double(result.config.tau_u)
        << '\n';
  else
    log << "calibrate: theta_occ " << format_double(result.config.theta[1]) << ", theta_unc "
        << format_double(result.config.theta[2]) << '\n';
  return result;
}

ExtractionConfig resolved_extraction(const RunConfig& cfg, const Workspace& ws) {
  ExtractionConfig e = extraction_config(cfg);
  const auto path = ws.calibration(config_mode(cfg));
  if (cfg.get_bool("use_calibration") && std::filesystem::exists(path)) e = read_calibration(e, path);
  e.validate();
  return e;
}

void cmd_extract(const RunConfig& cfg, const Workspace& ws, std::ostream& log) {
  validate(cfg);
  const OccupancyModel model = load_model(cfg, ws);
  const Mode mode = model.config.mode;
  const std::string split = cfg.get("split");
  const UncertainMethod method = resolve_method(cfg.get("uncertain_method"), mode);
  const ExtractionConfig ecfg = resolved_extraction(cfg, ws);
  const int passes = static_cast<int>(cfg.get_int("mc_passes"));
  const auto dirs = list_samples(ws, split);
  if (dirs.empty()) throw IoError("no '" + split + "' samples under " + ws.samples().string());
  const auto out_root = ws.results_dir(mode, split);
  std::filesystem::create_directories(out_root);

  parallel_for(dirs.size(), config_jobs(cfg), [&](std::size_t i) {
    const DatasetSample s = read_sample(dirs[i]);
    const ScalarGrid3 prob = predict_sample(model, s);
    ScalarGrid3 variance;
    if (method == UncertainMethod::variance)
      variance = mc_dropout_variance(model, s.cloud.points, prob.spec, passes, derive_seed(s.seed, 0xD20F));
    const PredictedRegions r =
        extract_regions(prob, ecfg, method, method == UncertainMethod::variance ? &variance : nullptr);
    const auto dir = out_root / s.id;
    std::filesystem::create_directories(dir);
    write_region(r.occupied, dir / "occupied.sg3");
    write_region(r.uncertain, dir / "uncertain.sg3");
    write_obj(r.occupied_mesh, dir / "occupied.obj");
    write_obj(region_mesh(r.uncertain), dir / "uncertain.obj");
    write_extraction_params(ecfg, to_string(method), dir / "params.txt");
  });
  cfg.write(out_root / "config.txt");
  log << "extract: " << dirs.size() << " " << split << " samples, " << to_string(method) << " method -> "
      << out_root.string() << '\n';
}

SampleReport cmd_eval(const RunConfig& cfg, const Workspace& ws, std::ostream& log) {
  validate(cfg);
  const Mode mode = config_mode(cfg);
  const std::string split = cfg.get("split");
  const auto out_root = ws.results_dir(mode, split);
  const auto dirs = list_samples(ws, split);
  if (dirs.empty()) throw IoError("no '" + split + "' samples under " + ws.samples().string());
  const EvaluationParams base = evaluation_params(cfg);

  std::vector<SampleReport> rows(dirs.size());
  parallel_for(dirs.size(), config_jobs(cfg), [&](std::size_t i) {
    const DatasetSample s = read_sample(dirs[i]);
    const auto dir = out_root / s.id;
    if (!std::filesystem::exists(dir / "occupied.sg3"))
      throw IoError("missing extraction output " + (dir / "occupied.sg3").string() + " (run extract first)");
    const Region3 occ = read_region(dir / "occupied.sg3");
    const Region3 unc = read_region(dir / "uncertain.sg3");
    const GroundTruth gt = ground_truth(s);
    EvaluationParams p = base;
    p.seed = derive_seed(s.seed, 0xE7A1);
    rows[i] = evaluate_regions(s.id, occ, unc, gt.occupied, gt.uncertain, p);
  });
  write_report(rows, out_root / "report.csv");
  cfg.write(out_root / "eval_config.txt");
  const SampleReport mean = mean_report(rows);
  log << "eval: " << rows.size() << " samples, occupied IoU " << fmt(mean.occ.iou) << ", uncertain IoU "
      << fmt(mean.unc.iou) << " -> " << (out_root / "report.csv").string() << '\n';
  return mean;
}

std::vector<GraspSceneSummary> cmd_grasp(const RunConfig& cfg, const Workspace& ws, std::ostream& log) {
  validate(cfg);
  const Mode mode = config_mode(cfg);
  const std::string split = cfg.get("split");
  const auto out_root = ws.results_dir(mode, split);
  const auto dirs = list_samples(ws, split);
  if (dirs.empty()) throw IoError("no '" + split + "' samples under " + ws.samples().string());
  const GraspSampling sampling = grasp_sampling(cfg);
  const auto n_grasps = static_cast<std::size_t>(cfg.get_int("n_grasps"));
  const double pitch = cfg.get_double("probe_pitch");
  std::filesystem::create_directories(out_root / "grasps");

  std::vector<GraspSceneSummary> rows(dirs.size());
  parallel_for(dirs.size(), config_jobs(cfg), [&](std::size_t i) {
    const DatasetSample s = read_sample(dirs[i]);
    const auto dir = out_root / s.id;
    if (!std::filesystem::exists(dir / "occupied.obj"))
      throw IoError("missing extraction output " + (dir / "occupied.obj").string() + " (run extract first)");
    const TriangleMesh mesh = read_obj(dir / "occupied.obj");
    const Region3 unc = read_region(dir / "uncertain.sg3");
    const Region3 occ = read_region(dir / "occupied.sg3");
    GraspSceneSummary& row = rows[i];
    row.id = s.id;
    GraspSampling scene_sampling = sampling;
    scene_sampling.obstacle = &occ;
    std::vector<GraspCandidate> grasps;
    if (!mesh.empty()) grasps = sample_grasps(mesh, n_grasps, derive_seed(s.seed, 0x62A5), scene_sampling);
    for (auto& g : grasps) g.blocked = intersects_region(g, unc, sampling.gripper);
    const FilterResult f = filter_grasps(grasps, unc, sampling.gripper);
    row.candidates = grasps.size();
    row.kept = f.kept.size();
    row.failure = f.failure;
    row.collision_before =
        grasps.empty() ? kNaN : collision_rate(grasps, s.spec, s.pose, sampling.gripper, pitch);
    row.collision_after = f.kept.empty() ? kNaN : collision_rate(f.kept, s.spec, s.pose, sampling.gripper, pitch);
    write_grasps(grasps, out_root / "grasps" / (s.id + ".txt"));
  });

  const auto path = out_root / "grasp_summary.csv";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "id,candidates,kept,collision_before,collision_after,failure\n";
  double sum_before = 0, sum_after = 0;
  std::size_t n_before = 0, n_after = 0;
  for (const auto& r : rows) {
    out << r.id << ',' << r.candidates << ',' << r.kept << ',' << fmt(r.collision_before) << ','
        << fmt(r.collision_after) << ',' << (r.failure ? 1 : 0) << '\n';
    if (!std::isnan(r.collision_before)) sum_before += r.collision_before, ++n_before;
    if (!std::isnan(r.collision_after)) sum_after += r.collision_after, ++n_after;
  }
  const double mean_before = n_before ? sum_before / static_cast<double>(n_before) : kNaN;
  const double mean_after = n_after ? sum_after / static_cast<double>(n_after) : kNaN;
  out << "mean,,," << fmt(mean_before) << ',' << fmt(mean_after) << ",\n";
  if (!out) throw IoError("write failed: " + path.string());
  cfg.write(out_root / "grasp_config.txt");
  log << "grasp: " << rows.size() << " scenes, collision rate " << fmt(mean_before) << " -> " << fmt(mean_after)
      << '\n';
  return rows;
}

}  // namespace shapecomp
