#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "shapecomp/grid.hpp"
#include "shapecomp/synthdata.hpp"
#include "shapecomp/types.hpp"

namespace shapecomp {

enum class Mode { binary, trinary };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

struct ModelShape {
  int enc1 = 64;
  int enc2 = 128;
  int enc3 = 256;       // global feature width
  int local_dim = 32;   // lattice cell feature width
  int lattice = 8;      // cells per axis over the normalized cube
  int hidden = 256;
  /// Frequency bands of the sin/cos encoding appended to the query
  /// coordinate; 0 feeds the raw coordinate only.
  int fourier = 6;

  int query_features() const { return 3 + 6 * fourier; }
  bool operator==(const ModelShape&) const = default;
};

struct ModelConfig {
  Mode mode = Mode::trinary;
  ModelShape shape;
  double dropout = 0.1;
  /// Clouds are reduced to at most this many points before encoding.
  int max_points = 1024;

  int outputs() const { return mode == Mode::binary ? 1 : 3; }
  /// Length of the flat parameter vector.
  std::size_t parameter_count() const;
};

/// Offsets of every weight block inside the flat parameter vector.
struct ParameterLayout {
  struct Block {
    std::size_t offset = 0;
    int rows = 0;
    int cols = 0;
  };
  // encoder
  Block e1_w, e1_b, e2_w, e2_b, e3_w, e3_b, loc_w, loc_b;
  // decoder
  Block d1_q, d1_g, d1_l, d1_b, d2_w, d2_b, d3_w, d3_b;
  std::size_t total = 0;

  explicit ParameterLayout(const ModelConfig& cfg);
};

/// Parameters plus the configuration they belong to.
struct OccupancyModel {
  ModelConfig config;
  Eigen::VectorXf params;
  std::uint64_t seed = 0;

  OccupancyModel() = default;
  /// He-initialized weights, zero biases.
  OccupancyModel(const ModelConfig& cfg, std::uint64_t seed);
  bool all_finite() const { return params.allFinite(); }
};

/// Maps world coordinates of a scene box onto [-1, 1]^3.
struct Normalizer {
  Vec3 center = Vec3::Zero();
  double half = 1.0;

  static Normalizer from_box(const Box3& box);
  Vec3 apply(const Vec3& p) const { return (p - center) / half; }
};

/// Encoder output for one cloud.
struct FeatureBundle {
  Normalizer norm;
  Eigen::VectorXf global;
  Eigen::MatrixXf cells;       // local_dim x lattice^3, x-fastest
  Eigen::VectorXf global_term; // first decoder layer contribution of `global` plus bias
};

/// Normalizes by scene_box(cloud) and runs the point encoder.
FeatureBundle encode(const OccupancyModel& model, std::span<const Vec3> cloud);
FeatureBundle encode(const OccupancyModel& model, std::span<const Vec3> cloud, const Box3& box);

/// Class probabilities at one point: {p_occ} for binary, {p_free, p_occ, p_unc} for trinary.
std::vector<double> decode(const OccupancyModel& model, const FeatureBundle& features, const Vec3& p);

/// Mean cross-entropy of probabilities (1 channel = occupancy, 3 = class
/// simplex) against labels; probabilities are clamped to [1e-7, 1 - 1e-7].
double cross_entropy(std::span<const double> probs, int channels, std::span<const std::uint8_t> labels);

/// Grid of decode() values at every node, dropout disabled.
ScalarGrid3 predict_grid(const OccupancyModel& model, std::span<const Vec3> cloud, const GridSpec& grid);
ScalarGrid3 predict_grid(const OccupancyModel& model, const FeatureBundle& features, const GridSpec& grid);

/// Per-node sample variance of the occupancy probability over stochastic
/// forward passes with dropout active.
ScalarGrid3 mc_dropout_variance(const OccupancyModel& model, std::span<const Vec3> cloud, const GridSpec& grid,
                                int n_passes, std::uint64_t seed);

/// |grad y| of the occupancy probability; channel 1 of a 3-channel grid.
ScalarGrid3 occupancy_gradient(const ScalarGrid3& prob_grid);
/// Occupancy channel of a 1- or 3-channel probability grid.
ScalarGrid3 occupancy_channel(const ScalarGrid3& prob_grid);

// ---------------------------------------------------------------------------
// training

struct TrainingSample {
  std::string id;
  std::vector<Vec3> cloud;   // world frame
  Box3 box;                  // normalization box
  std::vector<Vec3> queries;
  std::vector<std::uint8_t> labels;  // {0,1} binary, {0,1,2} trinary
};

/// Labels follow the mode: trinary keeps the stored classes, binary uses
/// the true occupancy at every query.
TrainingSample make_training_sample(const DatasetSample& s, Mode mode);

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 16;
  int queries_per_sample = 512;
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 0;
};

/// Selects dropout masks; `enabled == false` runs the deterministic network.
struct DropoutKey {
  bool enabled = false;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

/// Mean cross-entropy over all queries of the batch and, when `grad` is
/// non-null, its gradient with respect to `params`.
template <class Scalar>
Scalar batch_loss(const ModelConfig& cfg, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& params,
                  std::span<const TrainingSample> batch, const DropoutKey& dropout,
                  Eigen::Matrix<Scalar, Eigen::Dynamic, 1>* grad);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  OccupancyModel model;  // best validation checkpoint
  std::vector<EpochLog> log;
  int best_epoch = 0;
  bool stopped_early = false;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using EpochCallback = std::function<void(const EpochLog&)>;

TrainResult train(std::span<const TrainingSample> train_set, std::span<const TrainingSample> val_set,
                  const ModelConfig& model_cfg, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Mean loss over every stored query, dropout disabled.
double evaluate_loss(const OccupancyModel& model, std::span<const TrainingSample> samples);

/// Indices of at most `max_points` points chosen by a hash of their
/// coordinates and `salt`; independent of the input order.
std::vector<std::size_t> select_points(std::span<const Vec3> cloud, int max_points, std::uint64_t salt = 0);

void write_checkpoint(const OccupancyModel& model, const std::filesystem::path& path);
OccupancyModel read_checkpoint(const std::filesystem::path& path);
void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

}  // namespace shapecomp
