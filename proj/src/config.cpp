#include "shapecomp/config.hpp"

#include <cmath>
#include <sstream>

namespace shapecomp {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "0", "master seed; every random stream derives from it"},
      {"jobs", "1", "worker threads for dataset generation and batch inference"},
      // dataset
      {"dataset_mode", "novel-view", "novel-view (shared object pool) or novel-instance (70/10/20 object split)"},
      {"n_train", "500", "training samples"},
      {"n_val", "100", "validation samples"},
      {"n_test", "200", "test samples"},
      {"n_objects", "60", "size of the object pool"},
      {"grid_resolution", "48", "lattice nodes per axis"},
      {"n_queries", "2048", "labelled query points stored per sample"},
      {"near_surface_fraction", "0.5", "share of query points drawn near the surface"},
      {"near_surface_std", "0.01", "near-surface offset std, fraction of object size"},
      {"camera_min_distance", "0.3", "meters"},
      {"camera_max_distance", "0.6", "meters"},
      {"focal_px", "225", "pinhole focal length in pixels"},
      {"image_size", "200", "rendered image width and height"},
      {"min_extent", "0.05", "smallest object size after scaling (m)"},
      {"max_extent", "0.15", "largest object size after scaling (m)"},
      {"min_z_scale", "0.8", "lower bound of the extra vertical stretch"},
      {"max_z_scale", "1.2", "upper bound of the extra vertical stretch"},
      {"noise_std", "0.005", "base point noise (m)"},
      {"extra_noise_std", "0.01", "extra noise on glancing points (m)"},
      {"ambiguity_samples", "72", "candidate rotations about the vertical axis"},
      {"theta_sim", "0.98", "view-similarity acceptance threshold"},
      {"signature_size", "64", "view signature resolution"},
      {"signature_depth_scale", "0.005", "depth difference (m) counted as a full mismatch"},
      {"translation_jitter", "0", "horizontal jitter (m) added to candidate poses"},
      // model
      {"model_mode", "trinary", "binary or trinary"},
      {"enc1", "64", "encoder width 1"},
      {"enc2", "128", "encoder width 2"},
      {"enc3", "256", "encoder width 3 (global feature)"},
      {"local_dim", "32", "lattice cell feature width"},
      {"lattice", "8", "feature lattice cells per axis"},
      {"hidden", "256", "decoder hidden width"},
      {"fourier", "6", "sin/cos frequency bands on the decoder's query coordinate"},
      {"dropout", "0.1", "decoder dropout rate"},
      {"max_points", "1024", "points kept per cloud before encoding"},
      // training
      {"learning_rate", "0.001", "Adam step size"},
      {"batch_size", "16", "samples per step"},
      {"queries_per_sample", "512", "query points drawn per sample and step"},
      {"max_epochs", "100", "epoch limit"},
      {"patience", "10", "epochs without validation improvement before stopping"},
      // extraction
      {"tau", "0.5", "occupied threshold"},
      {"tau_u", "0.1", "uncertain threshold (below tau)"},
      {"uncertain_rule", "band", "band (tau_u <= y < tau) or below (y < tau_u)"},
      {"uncertain_method", "auto", "auto, gradient, variance or trinary"},
      {"theta_free", "0.333333333333333333", "trinary free-class divisor"},
      {"theta_occ", "0.333333333333333333", "trinary occupied-class divisor"},
      {"theta_unc", "0.333333333333333333", "trinary uncertain-class divisor"},
      {"min_voxels", "-1", "smallest kept component; -1 = 0.1% of the grid"},
      {"filter_occupied", "true", "apply component filtering to occupied regions"},
      {"mc_passes", "32", "stochastic passes for the variance method"},
      {"use_calibration", "true", "extract with thresholds from the calibrate step when present"},
      {"sweep", "0.05:0.95:0.05", "calibration values, lo:hi:step or a comma list"},
      {"split", "test", "split used by extract, eval and grasp"},
      // evaluation
      {"confusion_samples", "100000", "uniform points per sample for confusion counts"},
      {"chamfer_samples", "100000", "surface points per mesh for Chamfer-L1"},
      // grasping
      {"n_grasps", "256", "candidates sampled per scene"},
      {"finger_size", "0.02 0.02 0.06", "finger box x y z (m)"},
      {"palm_size", "0.08 0.03 0.03", "palm box x y z (m)"},
      {"jaw_span", "0.08", "maximum jaw opening (m)"},
      {"grasp_clearance", "0.005", "gap between finger and contact (m)"},
      {"probe_pitch", "0.005", "collision probe spacing (m)"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  RunConfig c;
  KeyValues kv;
  try {
    kv = read_key_values(path);
  } catch (const IoError& e) {
    if (!std::filesystem::exists(path)) throw;
    throw ConfigError(e.what());
  }
  for (const auto& [k, v] : kv) c.set(k, v);
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = trim(value);
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  try {
    const double v = parse_double(get(key));
    if (!std::isfinite(v)) throw ConfigError("config key '" + key + "' must be finite");
    return v;
  } catch (const IoError&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + get(key) + "'");
  }
}

long long RunConfig::get_int(const std::string& key) const {
  try {
    return parse_int(get(key));
  } catch (const IoError&) {
    throw ConfigError("config key '" + key + "' expects an integer, got '" + get(key) + "'");
  }
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const long long v = get_int(key);
  if (v < 0) throw ConfigError("config key '" + key + "' must be >= 0");
  return static_cast<std::uint64_t>(v);
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "' expects true/false, got '" + v + "'");
}

Vec3 RunConfig::get_vec3(const std::string& key) const {
  std::istringstream ss(get(key));
  std::string a, b, c, extra;
  ss >> a >> b >> c;
  if (!ss || (ss >> extra)) throw ConfigError("config key '" + key + "' expects three numbers");
  try {
    return {parse_double(a), parse_double(b), parse_double(c)};
  } catch (const IoError&) {
    throw ConfigError("config key '" + key + "' expects three numbers");
  }
}

void RunConfig::write(const std::filesystem::path& path) const { write_key_values(values_, path); }

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

int positive_int(const RunConfig& c, const std::string& key, long long min = 1) {
  const long long v = c.get_int(key);
  require(v >= min && v <= 1'000'000'000, "config key '" + key + "' must be >= " + std::to_string(min));
  return static_cast<int>(v);
}

}  // namespace

GenerationParams generation_params(const RunConfig& c) {
  GenerationParams g;
  g.camera.min_distance = c.get_double("camera_min_distance");
  g.camera.max_distance = c.get_double("camera_max_distance");
  g.camera.focal_px = c.get_double("focal_px");
  g.camera.image_size = positive_int(c, "image_size", 16);
  require(g.camera.min_distance > 0 && g.camera.max_distance >= g.camera.min_distance,
          "camera distances must satisfy 0 < min <= max");
  require(g.camera.focal_px > 0, "focal_px must be > 0");
  g.scale.min_extent = c.get_double("min_extent");
  g.scale.max_extent = c.get_double("max_extent");
  g.scale.min_z = c.get_double("min_z_scale");
  g.scale.max_z = c.get_double("max_z_scale");
  require(g.scale.min_extent > 0 && g.scale.max_extent >= g.scale.min_extent, "extent range is invalid");
  require(g.scale.min_z > 0 && g.scale.max_z >= g.scale.min_z, "z scale range is invalid");
  g.augment.noise_std = c.get_double("noise_std");
  g.augment.extra_noise_std = c.get_double("extra_noise_std");
  require(g.augment.noise_std >= 0 && g.augment.extra_noise_std >= 0, "noise std must be >= 0");
  g.queries.near_surface_fraction = c.get_double("near_surface_fraction");
  g.queries.near_surface_std = c.get_double("near_surface_std");
  require(g.queries.near_surface_fraction >= 0 && g.queries.near_surface_fraction <= 1,
          "near_surface_fraction must be in [0, 1]");
  require(g.queries.near_surface_std >= 0, "near_surface_std must be >= 0");
  g.grid_resolution = positive_int(c, "grid_resolution", 4);
  g.n_queries = static_cast<std::size_t>(positive_int(c, "n_queries"));
  g.ambiguity_samples = positive_int(c, "ambiguity_samples");
  g.theta_sim = c.get_double("theta_sim");
  require(g.theta_sim > 0 && g.theta_sim <= 1, "theta_sim must be in (0, 1]");
  g.signature_size = positive_int(c, "signature_size", 4);
  g.signature_depth_scale = c.get_double("signature_depth_scale");
  require(g.signature_depth_scale > 0, "signature_depth_scale must be > 0");
  g.translation_jitter = c.get_double("translation_jitter");
  require(g.translation_jitter >= 0, "translation_jitter must be >= 0");
  return g;
}

ModelConfig model_config(const RunConfig& c) {
  ModelConfig m;
  try {
    m.mode = parse_mode(c.get("model_mode"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  m.shape.enc1 = positive_int(c, "enc1");
  m.shape.enc2 = positive_int(c, "enc2");
  m.shape.enc3 = positive_int(c, "enc3");
  m.shape.local_dim = positive_int(c, "local_dim");
  m.shape.lattice = positive_int(c, "lattice");
  m.shape.hidden = positive_int(c, "hidden");
  m.shape.fourier = positive_int(c, "fourier", 0);
  require(m.shape.fourier <= 16, "fourier must be at most 16");
  m.dropout = c.get_double("dropout");
  require(m.dropout >= 0 && m.dropout < 1, "dropout must be in [0, 1)");
  m.max_points = positive_int(c, "max_points");
  return m;
}

TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.learning_rate = c.get_double("learning_rate");
  require(t.learning_rate > 0, "learning_rate must be > 0");
  t.batch_size = positive_int(c, "batch_size");
  t.queries_per_sample = positive_int(c, "queries_per_sample");
  t.max_epochs = positive_int(c, "max_epochs");
  t.patience = positive_int(c, "patience");
  t.seed = c.get_u64("seed");
  return t;
}

ExtractionConfig extraction_config(const RunConfig& c) {
  ExtractionConfig e;
  e.tau = c.get_double("tau");
  e.tau_u = c.get_double("tau_u");
  try {
    e.rule = parse_uncertain_rule(c.get("uncertain_rule"));
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  e.theta = {c.get_double("theta_free"), c.get_double("theta_occ"), c.get_double("theta_unc")};
  e.min_voxels = c.get_int("min_voxels");
  e.filter_occupied = c.get_bool("filter_occupied");
  try {
    e.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  return e;
}

EvaluationParams evaluation_params(const RunConfig& c) {
  EvaluationParams p;
  p.confusion_samples = static_cast<std::size_t>(positive_int(c, "confusion_samples"));
  p.chamfer_samples = static_cast<std::size_t>(positive_int(c, "chamfer_samples"));
  p.seed = c.get_u64("seed");
  return p;
}

GraspSampling grasp_sampling(const RunConfig& c) {
  GraspSampling g;
  g.gripper.finger = c.get_vec3("finger_size");
  g.gripper.palm = c.get_vec3("palm_size");
  g.gripper.max_span = c.get_double("jaw_span");
  g.gripper.clearance = c.get_double("grasp_clearance");
  require((g.gripper.finger.array() > 0).all() && (g.gripper.palm.array() > 0).all(), "gripper boxes must be > 0");
  require(g.gripper.max_span > 2 * g.gripper.clearance && g.gripper.clearance >= 0,
          "jaw_span must exceed twice grasp_clearance");
  return g;
}

std::vector<double> sweep_values(const RunConfig& c) {
  const std::string s = c.get("sweep");
  std::vector<double> out;
  try {
    if (s.find(':') != std::string::npos) {
      const auto parts = split(s, ':');
      require(parts.size() == 3, "sweep must be lo:hi:step");
      const double lo = parse_double(parts[0]), hi = parse_double(parts[1]), step = parse_double(parts[2]);
      require(step > 0 && hi >= lo, "sweep must have step > 0 and hi >= lo");
      const auto n = static_cast<long long>(std::floor((hi - lo) / step + 1e-9));
      for (long long i = 0; i <= n; ++i) out.push_back(std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12);
    } else {
      for (const auto& t : split(s, ',')) out.push_back(parse_double(t));
    }
  } catch (const IoError&) {
    throw ConfigError("sweep: cannot parse '" + s + "'");
  }
  require(!out.empty(), "sweep is empty");
  for (double v : out) require(v > 0 && v < 1, "sweep values must lie in (0, 1)");
  return out;
}

void validate(const RunConfig& c) {
  (void)generation_params(c);
  (void)model_config(c);
  (void)train_config(c);
  (void)extraction_config(c);
  (void)evaluation_params(c);
  (void)grasp_sampling(c);
  (void)sweep_values(c);
  positive_int(c, "jobs");
  positive_int(c, "n_train");
  positive_int(c, "n_val");
  positive_int(c, "n_test");
  positive_int(c, "n_objects");
  positive_int(c, "n_grasps");
  positive_int(c, "mc_passes", 2);
  require(c.get_double("probe_pitch") > 0, "probe_pitch must be > 0");
  (void)c.get_bool("use_calibration");
  const std::string& mode = c.get("dataset_mode");
  require(mode == "novel-view" || mode == "novel-instance", "dataset_mode must be novel-view or novel-instance");
  const std::string& method = c.get("uncertain_method");
  require(method == "auto" || method == "gradient" || method == "variance" || method == "trinary",
          "uncertain_method must be auto, gradient, variance or trinary");
  const std::string& split_name = c.get("split");
  require(split_name == "train" || split_name == "val" || split_name == "test", "split must be train, val or test");
}

}  // namespace shapecomp
