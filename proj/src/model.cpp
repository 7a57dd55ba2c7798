#include "shapecomp/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <numbers>
#include <random>
#include <sstream>

#include "shapecomp/io.hpp"
#include "shapecomp/rng.hpp"

namespace shapecomp {

namespace {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

constexpr double kLogitClamp = 15.0;
// Inference always runs the decoder on blocks of this many queries so that a
// single decode() and a full grid evaluate through identical kernels.
constexpr int kChunk = 256;

template <class S>
Eigen::Map<const Mat<S>> view(const Vec<S>& p, const ParameterLayout::Block& b) {
  return {p.data() + b.offset, b.rows, b.cols};
}
template <class S>
Eigen::Map<Mat<S>> view(Vec<S>& p, const ParameterLayout::Block& b) {
  return {p.data() + b.offset, b.rows, b.cols};
}
template <class S>
Eigen::Map<const Vec<S>> bias(const Vec<S>& p, const ParameterLayout::Block& b) {
  return {p.data() + b.offset, b.rows};
}
template <class S>
Eigen::Map<Vec<S>> bias(Vec<S>& p, const ParameterLayout::Block& b) {
  return {p.data() + b.offset, b.rows};
}

template <class S>
void relu_inplace(Mat<S>& m) {
  m = m.cwiseMax(S(0));
}

// Fills a hidden x cols dropout multiplier (0 or 1/(1-rate)).
template <class S>
void dropout_mask(Mat<S>& mask, double rate, const DropoutKey& key, int layer, std::uint64_t first_id) {
  const S keep_scale = S(1.0 / (1.0 - rate));
  for (Eigen::Index j = 0; j < mask.cols(); ++j) {
    const std::uint64_t id = first_id + static_cast<std::uint64_t>(j);
    for (Eigen::Index u = 0; u < mask.rows(); u += 4) {
      const std::uint64_t h = hash_combine(key.seed, key.stream, (static_cast<std::uint64_t>(layer) << 48) ^ id,
                                           static_cast<std::uint64_t>(u));
      for (Eigen::Index k = 0; k < 4 && u + k < mask.rows(); ++k) {
        const double r = static_cast<double>((h >> (16 * k)) & 0xFFFFu) / 65536.0;
        mask(u + k, j) = r >= rate ? keep_scale : S(0);
      }
    }
  }
}

struct Interp {
  std::array<int, 8> cell;
  std::array<double, 8> weight;
};

Interp interpolation(const Vec3& q, int lattice) {
  Interp out{};
  std::array<int, 3> i0{};
  std::array<double, 3> t{};
  for (int a = 0; a < 3; ++a) {
    double u = (q[a] + 1.0) * 0.5 * lattice - 0.5;
    u = std::clamp(u, 0.0, static_cast<double>(lattice - 1));
    int i = std::min(static_cast<int>(std::floor(u)), std::max(lattice - 2, 0));
    i0[a] = i;
    t[a] = lattice > 1 ? u - i : 0.0;
  }
  int n = 0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const int x = std::min(i0[0] + dx, lattice - 1);
        const int y = std::min(i0[1] + dy, lattice - 1);
        const int z = std::min(i0[2] + dz, lattice - 1);
        out.cell[n] = x + lattice * (y + lattice * z);
        out.weight[n] = (dx ? t[0] : 1.0 - t[0]) * (dy ? t[1] : 1.0 - t[1]) * (dz ? t[2] : 1.0 - t[2]);
        ++n;
      }
  return out;
}

int cell_of(const Vec3& q, int lattice) {
  int idx[3];
  for (int a = 0; a < 3; ++a)
    idx[a] = std::clamp(static_cast<int>(std::floor((q[a] + 1.0) * 0.5 * lattice)), 0, lattice - 1);
  return idx[0] + lattice * (idx[1] + lattice * idx[2]);
}

template <class S>
struct EncoderCache {
  Mat<S> x, h1, h2, h3, local;
  Vec<S> global;
  std::vector<Eigen::Index> global_arg;
  Mat<S> cells;
  std::vector<Eigen::Index> cell_arg;  // local_dim x cells, -1 when empty
};

template <class S>
void encoder_forward(const ParameterLayout& L, const ModelConfig& cfg, const Vec<S>& p, const Mat<S>& x,
                     EncoderCache<S>& c) {
  c.x = x;
  c.h1 = (view(p, L.e1_w) * x).colwise() + bias(p, L.e1_b);
  relu_inplace(c.h1);
  c.h2 = (view(p, L.e2_w) * c.h1).colwise() + bias(p, L.e2_b);
  relu_inplace(c.h2);
  c.h3 = (view(p, L.e3_w) * c.h2).colwise() + bias(p, L.e3_b);
  relu_inplace(c.h3);
  const Eigen::Index n = x.cols();
  c.global.resize(c.h3.rows());
  c.global_arg.assign(static_cast<std::size_t>(c.h3.rows()), 0);
  for (Eigen::Index r = 0; r < c.h3.rows(); ++r) {
    Eigen::Index arg = 0;
    c.global(r) = c.h3.row(r).maxCoeff(&arg);
    c.global_arg[static_cast<std::size_t>(r)] = arg;
  }
  c.local = (view(p, L.loc_w) * c.h3).colwise() + bias(p, L.loc_b);
  const int lat = cfg.shape.lattice;
  const Eigen::Index n_cells = static_cast<Eigen::Index>(lat) * lat * lat;
  const Eigen::Index d = c.local.rows();
  c.cells = Mat<S>::Zero(d, n_cells);
  c.cell_arg.assign(static_cast<std::size_t>(d * n_cells), -1);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Vec3 q(static_cast<double>(x(0, j)), static_cast<double>(x(1, j)), static_cast<double>(x(2, j)));
    const Eigen::Index cell = cell_of(q, lat);
    for (Eigen::Index r = 0; r < d; ++r) {
      auto& arg = c.cell_arg[static_cast<std::size_t>(cell * d + r)];
      if (arg < 0 || c.local(r, j) > c.cells(r, cell)) {
        c.cells(r, cell) = c.local(r, j);
        arg = j;
      }
    }
  }
}

template <class S>
struct DecoderCache {
  Mat<S> q, loc, a1, m1, h1, a2, m2, h2, z;
  std::vector<Interp> interp;
};

template <class S>
void decoder_forward(const ParameterLayout& L, const ModelConfig& cfg, const Vec<S>& p, const Vec<S>& global_term,
                     const Mat<S>& cells, const Mat<S>& q, const DropoutKey& key, std::uint64_t first_id,
                     DecoderCache<S>& c) {
  const Eigen::Index m = q.cols();
  const int bands = cfg.shape.fourier;
  c.q.resize(cfg.shape.query_features(), m);
  c.q.topRows(3) = q;
  for (int k = 0; k < bands; ++k) {
    const S w = S(std::ldexp(std::numbers::pi, k));
    c.q.middleRows(3 + 6 * k, 3) = (w * q.array()).sin().matrix();
    c.q.middleRows(6 + 6 * k, 3) = (w * q.array()).cos().matrix();
  }
  c.interp.resize(static_cast<std::size_t>(m));
  c.loc = Mat<S>::Zero(cells.rows(), m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const Vec3 qj(static_cast<double>(q(0, j)), static_cast<double>(q(1, j)), static_cast<double>(q(2, j)));
    auto& it = c.interp[static_cast<std::size_t>(j)];
    it = interpolation(qj, cfg.shape.lattice);
    for (int k = 0; k < 8; ++k) c.loc.col(j) += S(it.weight[k]) * cells.col(it.cell[k]);
  }
  c.a1 = view(p, L.d1_q) * c.q;
  c.a1.noalias() += view(p, L.d1_l) * c.loc;
  c.a1.colwise() += global_term;
  c.h1 = c.a1.cwiseMax(S(0));
  const bool drop = key.enabled && cfg.dropout > 0.0;
  if (drop) {
    c.m1.resize(c.h1.rows(), m);
    dropout_mask(c.m1, cfg.dropout, key, 1, first_id);
    c.h1.array() *= c.m1.array();
  }
  c.a2 = (view(p, L.d2_w) * c.h1).colwise() + bias(p, L.d2_b);
  c.h2 = c.a2.cwiseMax(S(0));
  if (drop) {
    c.m2.resize(c.h2.rows(), m);
    dropout_mask(c.m2, cfg.dropout, key, 2, first_id);
    c.h2.array() *= c.m2.array();
  }
  c.z = (view(p, L.d3_w) * c.h2).colwise() + bias(p, L.d3_b);
}

template <class S>
Mat<S> normalized_points(std::span<const Vec3> pts, const std::vector<std::size_t>& idx, const Normalizer& n) {
  Mat<S> x(3, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) x.col(static_cast<Eigen::Index>(j)) = n.apply(pts[idx[j]]).cast<S>();
  return x;
}

// Probabilities from (clamped) logits, in double.
void probabilities(const Eigen::Ref<const Eigen::VectorXd>& logits, double* out) {
  if (logits.size() == 1) {
    const double z = std::clamp(logits(0), -kLogitClamp, kLogitClamp);
    out[0] = 1.0 / (1.0 + std::exp(-z));
    return;
  }
  double zmax = -1e300;
  double z[3];
  for (int k = 0; k < 3; ++k) {
    z[k] = std::clamp(logits(k), -kLogitClamp, kLogitClamp);
    zmax = std::max(zmax, z[k]);
  }
  double sum = 0.0;
  for (int k = 0; k < 3; ++k) sum += (out[k] = std::exp(z[k] - zmax));
  for (int k = 0; k < 3; ++k) out[k] /= sum;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(Mode m) { return m == Mode::binary ? "binary" : "trinary"; }

Mode parse_mode(const std::string& s) {
  if (s == "binary") return Mode::binary;
  if (s == "trinary") return Mode::trinary;
  throw std::invalid_argument("unknown mode '" + s + "' (expected binary or trinary)");
}

ParameterLayout::ParameterLayout(const ModelConfig& cfg) {
  const auto& s = cfg.shape;
  auto add = [this](Block& b, int rows, int cols) {
    b = {total, rows, cols};
    total += static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  };
  add(e1_w, s.enc1, 3);
  add(e1_b, s.enc1, 1);
  add(e2_w, s.enc2, s.enc1);
  add(e2_b, s.enc2, 1);
  add(e3_w, s.enc3, s.enc2);
  add(e3_b, s.enc3, 1);
  add(loc_w, s.local_dim, s.enc3);
  add(loc_b, s.local_dim, 1);
  add(d1_q, s.hidden, s.query_features());
  add(d1_g, s.hidden, s.enc3);
  add(d1_l, s.hidden, s.local_dim);
  add(d1_b, s.hidden, 1);
  add(d2_w, s.hidden, s.hidden);
  add(d2_b, s.hidden, 1);
  add(d3_w, cfg.outputs(), s.hidden);
  add(d3_b, cfg.outputs(), 1);
}

std::size_t ModelConfig::parameter_count() const { return ParameterLayout(*this).total; }

OccupancyModel::OccupancyModel(const ModelConfig& cfg, std::uint64_t seed_) : config(cfg), seed(seed_) {
  const auto& s = cfg.shape;
  if (s.enc1 < 1 || s.enc2 < 1 || s.enc3 < 1 || s.local_dim < 1 || s.lattice < 1 || s.hidden < 1 || s.fourier < 0)
    throw std::invalid_argument("model widths must be positive");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw std::invalid_argument("dropout must be in [0, 1)");
  if (cfg.max_points < 1) throw std::invalid_argument("max_points must be positive");
  const ParameterLayout L(cfg);
  params = Eigen::VectorXf::Zero(static_cast<Eigen::Index>(L.total));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto init = [&](const ParameterLayout::Block& b, int fan_in, double gain) {
    const double std = std::sqrt(gain / fan_in);
    for (std::size_t i = 0; i < static_cast<std::size_t>(b.rows) * b.cols; ++i)
      params(static_cast<Eigen::Index>(b.offset + i)) = static_cast<float>(std * normal(rng));
  };
  init(L.e1_w, 3, 2.0);
  init(L.e2_w, s.enc1, 2.0);
  init(L.e3_w, s.enc2, 2.0);
  init(L.loc_w, s.enc3, 1.0);
  const int fan1 = s.query_features() + s.enc3 + s.local_dim;
  init(L.d1_q, fan1, 2.0);
  init(L.d1_g, fan1, 2.0);
  init(L.d1_l, fan1, 2.0);
  init(L.d2_w, s.hidden, 2.0);
  init(L.d3_w, s.hidden, 1.0);
}

Normalizer Normalizer::from_box(const Box3& box) {
  const double side = box.extent().maxCoeff();
  if (!(side > 0)) throw std::invalid_argument("normalization box is degenerate");
  return {box.center(), 0.5 * side};
}

std::vector<std::size_t> select_points(std::span<const Vec3> cloud, int max_points, std::uint64_t salt) {
  std::vector<std::size_t> idx(cloud.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto cap = static_cast<std::size_t>(std::max(max_points, 1));
  if (cloud.size() <= cap) return idx;
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud[i];
    keyed[i] = {hash_combine(std::bit_cast<std::uint64_t>(p.x()), std::bit_cast<std::uint64_t>(p.y()),
                             std::bit_cast<std::uint64_t>(p.z()), salt),
                i};
  }
  std::nth_element(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(cap), keyed.end());
  idx.resize(cap);
  for (std::size_t i = 0; i < cap; ++i) idx[i] = keyed[i].second;
  std::sort(idx.begin(), idx.end());
  return idx;
}

FeatureBundle encode(const OccupancyModel& model, std::span<const Vec3> cloud, const Box3& box) {
  if (cloud.empty()) throw std::invalid_argument("encode: empty cloud");
  const ParameterLayout L(model.config);
  FeatureBundle f;
  f.norm = Normalizer::from_box(box);
  const auto idx = select_points(cloud, model.config.max_points);
  EncoderCache<float> c;
  encoder_forward<float>(L, model.config, model.params, normalized_points<float>(cloud, idx, f.norm), c);
  f.global = c.global;
  f.cells = c.cells;
  f.global_term = view(model.params, L.d1_g) * f.global + bias(model.params, L.d1_b);
  return f;
}

FeatureBundle encode(const OccupancyModel& model, std::span<const Vec3> cloud) {
  if (cloud.empty()) throw std::invalid_argument("encode: empty cloud");
  OrientedPointCloud pc;
  pc.points.assign(cloud.begin(), cloud.end());
  return encode(model, cloud, scene_box(pc));
}

namespace {

// Evaluates probabilities for `pts` (normalized) in fixed-size chunks.
// `out` receives channels x n values, node-major.
void evaluate_points(const OccupancyModel& model, const FeatureBundle& f, const std::vector<Vec3>& normalized,
                     const DropoutKey& key, std::uint64_t first_id, double* out) {
  const ParameterLayout L(model.config);
  const int ch = model.config.outputs();
  DecoderCache<float> c;
  Mat<float> q(3, kChunk);
  for (std::size_t start = 0; start < normalized.size(); start += kChunk) {
    const std::size_t count = std::min<std::size_t>(kChunk, normalized.size() - start);
    q.setZero();
    for (std::size_t j = 0; j < count; ++j) q.col(static_cast<Eigen::Index>(j)) = normalized[start + j].cast<float>();
    decoder_forward<float>(L, model.config, model.params, f.global_term, f.cells, q, key, first_id + start, c);
    for (std::size_t j = 0; j < count; ++j) {
      const Eigen::VectorXd z = c.z.col(static_cast<Eigen::Index>(j)).cast<double>();
      probabilities(z, out + (start + j) * static_cast<std::size_t>(ch));
    }
  }
}

}  // namespace

std::vector<double> decode(const OccupancyModel& model, const FeatureBundle& features, const Vec3& p) {
  std::vector<double> out(static_cast<std::size_t>(model.config.outputs()));
  evaluate_points(model, features, {features.norm.apply(p)}, DropoutKey{}, 0, out.data());
  return out;
}

double cross_entropy(std::span<const double> probs, int channels, std::span<const std::uint8_t> labels) {
  if (channels != 1 && channels != 3) throw std::invalid_argument("cross_entropy: channels must be 1 or 3");
  if (probs.size() != labels.size() * static_cast<std::size_t>(channels))
    throw std::invalid_argument("cross_entropy: length mismatch");
  if (labels.empty()) return 0.0;
  constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= std::max(channels, 2)) throw std::invalid_argument("cross_entropy: label out of range");
    double p;
    if (channels == 1)
      p = y == 1 ? probs[i] : 1.0 - probs[i];
    else
      p = probs[i * 3 + static_cast<std::size_t>(y)];
    sum -= std::log(std::clamp(p, lo, hi));
  }
  return sum / static_cast<double>(labels.size());
}

ScalarGrid3 predict_grid(const OccupancyModel& model, const FeatureBundle& features, const GridSpec& grid) {
  ScalarGrid3 out(grid, model.config.outputs());
  std::vector<Vec3> pts(grid.node_count());
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = features.norm.apply(grid.position(i));
  evaluate_points(model, features, pts, DropoutKey{}, 0, out.values.data());
  return out;
}

ScalarGrid3 predict_grid(const OccupancyModel& model, std::span<const Vec3> cloud, const GridSpec& grid) {
  return predict_grid(model, encode(model, cloud), grid);
}

ScalarGrid3 mc_dropout_variance(const OccupancyModel& model, std::span<const Vec3> cloud, const GridSpec& grid,
                                int n_passes, std::uint64_t seed) {
  if (n_passes < 2) throw std::invalid_argument("mc_dropout_variance: n_passes must be >= 2");
  const FeatureBundle f = encode(model, cloud);
  const int ch = model.config.outputs();
  const int occ = ch == 1 ? 0 : 1;
  const std::size_t n = grid.node_count();
  std::vector<Vec3> pts(n);
  for (std::size_t i = 0; i < n; ++i) pts[i] = f.norm.apply(grid.position(i));
  // Welford accumulation per node.
  std::vector<double> mean(n, 0.0), m2(n, 0.0), probs(n * static_cast<std::size_t>(ch));
  for (int pass = 0; pass < n_passes; ++pass) {
    evaluate_points(model, f, pts, DropoutKey{true, seed, static_cast<std::uint64_t>(pass)}, 0, probs.data());
    for (std::size_t i = 0; i < n; ++i) {
      const double y = probs[i * static_cast<std::size_t>(ch) + occ];
      const double d = y - mean[i];
      mean[i] += d / (pass + 1);
      m2[i] += d * (y - mean[i]);
    }
  }
  ScalarGrid3 out(grid, 1);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = std::max(0.0, m2[i] / (n_passes - 1));
  return out;
}

ScalarGrid3 occupancy_channel(const ScalarGrid3& prob_grid) {
  if (prob_grid.channels == 1) return prob_grid;
  if (prob_grid.channels == 3) return prob_grid.channel(1);
  throw std::invalid_argument("occupancy_channel: expected 1 or 3 channels");
}

ScalarGrid3 occupancy_gradient(const ScalarGrid3& prob_grid) {
  return vector_magnitude(grid_gradient(occupancy_channel(prob_grid)));
}

// ---------------------------------------------------------------------------
// training

TrainingSample make_training_sample(const DatasetSample& s, Mode mode) {
  TrainingSample t;
  t.id = s.id;
  t.cloud = s.cloud.points;
  t.box = s.uncertain.spec.bounds();
  t.queries = s.queries.points;
  t.labels = s.queries.labels;
  if (mode == Mode::binary) {
    for (std::size_t i = 0; i < t.queries.size(); ++i)
      t.labels[i] = sdf_object(s.spec, s.pose, t.queries[i]) < 0.0 ? 1 : 0;
  }
  return t;
}

template <class S>
S batch_loss(const ModelConfig& cfg, const Vec<S>& p, std::span<const TrainingSample> batch, const DropoutKey& key,
             Vec<S>* grad) {
  const ParameterLayout L(cfg);
  if (static_cast<std::size_t>(p.size()) != L.total) throw std::invalid_argument("batch_loss: parameter size mismatch");
  std::size_t total_q = 0;
  for (const auto& s : batch) total_q += s.queries.size();
  if (total_q == 0) throw std::invalid_argument("batch_loss: no queries");
  if (grad) grad->setZero(p.size());
  const int K = cfg.outputs();
  const int max_label = K == 1 ? 1 : 2;
  const S inv_n = S(1.0 / static_cast<double>(total_q));
  double loss = 0.0;

  EncoderCache<S> ec;
  DecoderCache<S> dc;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const TrainingSample& s = batch[b];
    if (s.queries.empty()) continue;
    if (s.cloud.empty()) throw std::invalid_argument("batch_loss: empty cloud in sample '" + s.id + "'");
    if (s.labels.size() != s.queries.size()) throw std::invalid_argument("batch_loss: label count mismatch");
    const Normalizer norm = Normalizer::from_box(s.box);
    const auto idx = select_points(s.cloud, cfg.max_points);
    encoder_forward<S>(L, cfg, p, normalized_points<S>(s.cloud, idx, norm), ec);
    const Vec<S> gterm = view(p, L.d1_g) * ec.global + bias(p, L.d1_b);
    Mat<S> q(3, static_cast<Eigen::Index>(s.queries.size()));
    for (std::size_t j = 0; j < s.queries.size(); ++j) q.col(static_cast<Eigen::Index>(j)) = norm.apply(s.queries[j]).cast<S>();
    decoder_forward<S>(L, cfg, p, gterm, ec.cells, q, key, static_cast<std::uint64_t>(b) << 32, dc);

    const Eigen::Index m = q.cols();
    Mat<S> dz(K, m);
    for (Eigen::Index j = 0; j < m; ++j) {
      const int y = s.labels[static_cast<std::size_t>(j)];
      if (y < 0 || y > max_label) throw std::invalid_argument("batch_loss: label out of range");
      if (K == 1) {
        const S z = dc.z(0, j);
        const S zc = std::clamp(z, S(-kLogitClamp), S(kLogitClamp));
        // softplus(z) - y z
        const S sp = zc > S(0) ? zc + std::log1p(std::exp(-zc)) : std::log1p(std::exp(zc));
        loss += static_cast<double>(sp - S(y) * zc);
        const S prob = S(1) / (S(1) + std::exp(-zc));
        dz(0, j) = (z == zc) ? (prob - S(y)) * inv_n : S(0);
      } else {
        S zc[3];
        S zmax = S(-1e30);
        for (int k = 0; k < 3; ++k) {
          zc[k] = std::clamp(dc.z(k, j), S(-kLogitClamp), S(kLogitClamp));
          zmax = std::max(zmax, zc[k]);
        }
        S sum = 0;
        for (int k = 0; k < 3; ++k) sum += std::exp(zc[k] - zmax);
        const S lse = zmax + std::log(sum);
        loss += static_cast<double>(lse - zc[y]);
        for (int k = 0; k < 3; ++k) {
          const S prob = std::exp(zc[k] - lse);
          dz(k, j) = (dc.z(k, j) == zc[k]) ? (prob - S(k == y ? 1 : 0)) * inv_n : S(0);
        }
      }
    }
    if (!grad) continue;
    Vec<S>& g = *grad;

    // decoder
    view(g, L.d3_w).noalias() += dz * dc.h2.transpose();
    bias(g, L.d3_b) += dz.rowwise().sum();
    Mat<S> dh = view(p, L.d3_w).transpose() * dz;
    if (dc.m2.size() && key.enabled && cfg.dropout > 0) dh.array() *= dc.m2.array();
    dh = (dc.a2.array() > S(0)).select(dh, S(0));
    view(g, L.d2_w).noalias() += dh * dc.h1.transpose();
    bias(g, L.d2_b) += dh.rowwise().sum();
    Mat<S> da1 = view(p, L.d2_w).transpose() * dh;
    if (dc.m1.size() && key.enabled && cfg.dropout > 0) da1.array() *= dc.m1.array();
    da1 = (dc.a1.array() > S(0)).select(da1, S(0));
    view(g, L.d1_q).noalias() += da1 * dc.q.transpose();
    view(g, L.d1_l).noalias() += da1 * dc.loc.transpose();
    const Vec<S> dgterm = da1.rowwise().sum();
    bias(g, L.d1_b) += dgterm;
    view(g, L.d1_g).noalias() += dgterm * ec.global.transpose();
    const Vec<S> dglobal = view(p, L.d1_g).transpose() * dgterm;
    const Mat<S> dloc = view(p, L.d1_l).transpose() * da1;

    // lattice features -> per-point local features
    Mat<S> dcells = Mat<S>::Zero(ec.cells.rows(), ec.cells.cols());
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto& it = dc.interp[static_cast<std::size_t>(j)];
      for (int k = 0; k < 8; ++k) dcells.col(it.cell[k]) += S(it.weight[k]) * dloc.col(j);
    }
    const Eigen::Index d = ec.cells.rows();
    Mat<S> dlocal = Mat<S>::Zero(d, ec.x.cols());
    for (Eigen::Index cell = 0; cell < ec.cells.cols(); ++cell)
      for (Eigen::Index r = 0; r < d; ++r) {
        const auto arg = ec.cell_arg[static_cast<std::size_t>(cell * d + r)];
        if (arg >= 0) dlocal(r, arg) += dcells(r, cell);
      }

    // encoder
    view(g, L.loc_w).noalias() += dlocal * ec.h3.transpose();
    bias(g, L.loc_b) += dlocal.rowwise().sum();
    Mat<S> dh3 = view(p, L.loc_w).transpose() * dlocal;
    for (Eigen::Index r = 0; r < dh3.rows(); ++r) dh3(r, ec.global_arg[static_cast<std::size_t>(r)]) += dglobal(r);
    dh3 = (ec.h3.array() > S(0)).select(dh3, S(0));
    view(g, L.e3_w).noalias() += dh3 * ec.h2.transpose();
    bias(g, L.e3_b) += dh3.rowwise().sum();
    Mat<S> dh2 = view(p, L.e3_w).transpose() * dh3;
    dh2 = (ec.h2.array() > S(0)).select(dh2, S(0));
    view(g, L.e2_w).noalias() += dh2 * ec.h1.transpose();
    bias(g, L.e2_b) += dh2.rowwise().sum();
    Mat<S> dh1 = view(p, L.e2_w).transpose() * dh2;
    dh1 = (ec.h1.array() > S(0)).select(dh1, S(0));
    view(g, L.e1_w).noalias() += dh1 * ec.x.transpose();
    bias(g, L.e1_b) += dh1.rowwise().sum();
  }
  return static_cast<S>(loss / static_cast<double>(total_q));
}

template float batch_loss<float>(const ModelConfig&, const Vec<float>&, std::span<const TrainingSample>,
                                 const DropoutKey&, Vec<float>*);
template double batch_loss<double>(const ModelConfig&, const Vec<double>&, std::span<const TrainingSample>,
                                   const DropoutKey&, Vec<double>*);

double evaluate_loss(const OccupancyModel& model, std::span<const TrainingSample> samples) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::size_t q = samples[i].queries.size();
    if (q == 0) continue;
    sum += static_cast<double>(batch_loss<float>(model.config, model.params, samples.subspan(i, 1), DropoutKey{},
                                                 nullptr)) *
           static_cast<double>(q);
    n += q;
  }
  if (n == 0) throw std::invalid_argument("evaluate_loss: no queries");
  return sum / static_cast<double>(n);
}

namespace {

TrainingSample training_view(const TrainingSample& s, int max_points, int n_queries, std::uint64_t seed) {
  TrainingSample t;
  t.id = s.id;
  t.box = s.box;
  for (std::size_t i : select_points(s.cloud, max_points, seed)) t.cloud.push_back(s.cloud[i]);
  const std::size_t nq = std::min<std::size_t>(static_cast<std::size_t>(n_queries), s.queries.size());
  std::vector<std::size_t> idx(s.queries.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < nq; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  for (std::size_t i = 0; i < nq; ++i) {
    t.queries.push_back(s.queries[idx[i]]);
    t.labels.push_back(s.labels[idx[i]]);
  }
  return t;
}

}  // namespace

TrainResult train(std::span<const TrainingSample> train_set, std::span<const TrainingSample> val_set,
                  const ModelConfig& model_cfg, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (train_set.empty() || val_set.empty()) throw std::invalid_argument("train: empty training or validation set");
  if (!(cfg.learning_rate > 0)) throw std::invalid_argument("train: learning_rate must be > 0");
  if (cfg.patience < 1) throw std::invalid_argument("train: patience must be >= 1");
  if (cfg.batch_size < 1 || cfg.queries_per_sample < 1 || cfg.max_epochs < 1)
    throw std::invalid_argument("train: batch_size, queries_per_sample and max_epochs must be >= 1");

  TrainResult result;
  OccupancyModel model(model_cfg, derive_seed(cfg.seed, 1));
  result.model = model;
  const Eigen::Index n_params = model.params.size();
  Eigen::VectorXf m = Eigen::VectorXf::Zero(n_params), v = Eigen::VectorXf::Zero(n_params), grad;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::uint64_t step = 0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t epoch_q = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<TrainingSample> batch;
      std::size_t bq = 0;
      for (std::size_t i = start; i < end; ++i) {
        const std::uint64_t s = hash_combine(cfg.seed, static_cast<std::uint64_t>(epoch), order[i]);
        batch.push_back(training_view(train_set[order[i]], model_cfg.max_points, cfg.queries_per_sample, s));
        bq += batch.back().queries.size();
      }
      ++step;
      const float loss = batch_loss<float>(model_cfg, model.params, batch,
                                           DropoutKey{model_cfg.dropout > 0, derive_seed(cfg.seed, 2), step}, &grad);
      if (!std::isfinite(loss) || !grad.allFinite())
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      epoch_loss += static_cast<double>(loss) * static_cast<double>(bq);
      epoch_q += bq;

      const double b1t = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double b2t = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      const float b1 = static_cast<float>(cfg.beta1), b2 = static_cast<float>(cfg.beta2);
      m = b1 * m + (1.0f - b1) * grad;
      v = b2 * v + (1.0f - b2) * grad.cwiseProduct(grad);
      const float lr = static_cast<float>(cfg.learning_rate / b1t);
      const float eps = static_cast<float>(cfg.epsilon);
      const float inv_b2t = static_cast<float>(1.0 / b2t);
      model.params.array() -= lr * m.array() / ((v.array() * inv_b2t).sqrt() + eps);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(epoch_q, 1));
    entry.val_loss = evaluate_loss(model, val_set);
    if (!std::isfinite(entry.val_loss)) throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (entry.val_loss < best_val) {
      best_val = entry.val_loss;
      result.model = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// files

void write_checkpoint(const OccupancyModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const auto& c = model.config;
  const auto& s = c.shape;
  out << "SCMODEL 1\n"
      << "mode " << to_string(c.mode) << '\n'
      << "shape " << s.enc1 << ' ' << s.enc2 << ' ' << s.enc3 << ' ' << s.local_dim << ' ' << s.lattice << ' '
      << s.hidden << ' ' << s.fourier << '\n'
      << "dropout " << format_double(c.dropout) << '\n'
      << "max_points " << c.max_points << '\n'
      << "seed " << model.seed << '\n'
      << "params " << model.params.size() << '\n';
  std::vector<char> blob(static_cast<std::size_t>(model.params.size()) * 4);
  for (Eigen::Index i = 0; i < model.params.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(model.params(i));
    for (int b = 0; b < 4; ++b) blob[static_cast<std::size_t>(i) * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
  }
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

OccupancyModel read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "SCMODEL 1") throw IoError("not a model checkpoint: " + path.string());
  OccupancyModel model;
  long long count = -1;
  while (count < 0 && std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "mode") {
      std::string m;
      ls >> m;
      try {
        model.config.mode = parse_mode(m);
      } catch (const std::invalid_argument& e) {
        throw IoError(e.what());
      }
    } else if (key == "shape") {
      auto& s = model.config.shape;
      ls >> s.enc1 >> s.enc2 >> s.enc3 >> s.local_dim >> s.lattice >> s.hidden >> s.fourier;
    } else if (key == "dropout") {
      std::string t;
      ls >> t;
      model.config.dropout = parse_double(t);
    } else if (key == "max_points") {
      ls >> model.config.max_points;
    } else if (key == "seed") {
      ls >> model.seed;
    } else if (key == "params") {
      ls >> count;
    } else {
      throw IoError("unknown checkpoint header key '" + key + "' in " + path.string());
    }
    if (!ls) throw IoError("bad checkpoint header line '" + line + "'");
  }
  if (count < 0 || static_cast<std::size_t>(count) != model.config.parameter_count())
    throw IoError("checkpoint parameter count does not match its shape: " + path.string());
  std::vector<unsigned char> blob(static_cast<std::size_t>(count) * 4);
  in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (in.gcount() != static_cast<std::streamsize>(blob.size())) throw IoError("truncated checkpoint " + path.string());
  model.params.resize(count);
  for (long long i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(blob[static_cast<std::size_t>(i) * 4 + b]) << (8 * b);
    model.params(i) = std::bit_cast<float>(bits);
  }
  return model;
}

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,train_loss,val_loss\n";
  for (const auto& e : log) out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace shapecomp
