#include "shapecomp/pipeline.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdio>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "shapecomp/object.hpp"
#include "shapecomp/rng.hpp"

namespace shapecomp {

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<int> split_objects(int n_objects, const std::string& split) {
  const int n_train = static_cast<int>(std::lround(0.7 * n_objects));
  const int n_val = static_cast<int>(std::lround(0.8 * n_objects)) - n_train;
  int lo = 0, hi = 0;
  if (split == "train") {
    lo = 0;
    hi = n_train;
  } else if (split == "val") {
    lo = n_train;
    hi = n_train + n_val;
  } else if (split == "test") {
    lo = n_train + n_val;
    hi = n_objects;
  } else {
    throw std::invalid_argument("unknown split '" + split + "'");
  }
  std::vector<int> out;
  for (int i = lo; i < hi; ++i) out.push_back(i);
  return out;
}

DatasetPlan plan_dataset(const RunConfig& cfg) {
  const std::uint64_t seed = cfg.get_u64("seed");
  const int n_objects = static_cast<int>(cfg.get_int("n_objects"));
  const bool instance = cfg.get("dataset_mode") == "novel-instance";
  if (instance && n_objects < 10) throw ConfigError("novel-instance mode needs n_objects >= 10");
  DatasetPlan plan;
  for (int i = 0; i < n_objects; ++i)
    plan.objects.push_back(random_object_spec(derive_seed(seed, 0x0B1EC7000ull + static_cast<std::uint64_t>(i))));

  const std::array<std::pair<const char*, const char*>, 3> splits{
      {{"train", "n_train"}, {"val", "n_val"}, {"test", "n_test"}}};
  std::uint64_t global = 0;
  for (std::size_t si = 0; si < splits.size(); ++si) {
    const std::string split = splits[si].first;
    const auto count = cfg.get_int(splits[si].second);
    std::vector<int> pool;
    if (instance) {
      pool = split_objects(n_objects, split);
    } else {
      pool.resize(static_cast<std::size_t>(n_objects));
      for (int i = 0; i < n_objects; ++i) pool[static_cast<std::size_t>(i)] = i;
    }
    if (pool.empty()) throw ConfigError("split '" + split + "' has no objects");
    for (long long k = 0; k < count; ++k, ++global) {
      DatasetItem item;
      item.split = split;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s_%05lld", split.c_str(), k);
      item.id = buf;
      item.object_index = pool[static_cast<std::size_t>((global + si) % pool.size())];
      item.seed = derive_seed(seed, 0x5A3B1E000000ull + global);
      plan.items.push_back(item);
    }
  }
  return plan;
}

void generate_dataset(const RunConfig& cfg, const Workspace& ws) {
  const DatasetPlan plan = plan_dataset(cfg);
  const GenerationParams params = generation_params(cfg);
  std::filesystem::create_directories(ws.samples());
  parallel_for(plan.items.size(), static_cast<int>(cfg.get_int("jobs")), [&](std::size_t i) {
    const DatasetItem& item = plan.items[i];
    DatasetSample s =
        generate_sample(plan.objects[static_cast<std::size_t>(item.object_index)], item.object_index, item.seed, params);
    s.id = item.id;
    write_sample(s, ws.samples() / item.id);
  });
  cfg.write(ws.samples() / "config.txt");
}

std::vector<std::filesystem::path> list_samples(const Workspace& ws, const std::string& split) {
  const auto dir = ws.samples();
  if (!std::filesystem::is_directory(dir)) throw IoError("missing dataset directory " + dir.string());
  const std::string prefix = split + "_";
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_directory() && e.path().filename().string().rfind(prefix, 0) == 0) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<DatasetSample> load_split(const Workspace& ws, const std::string& split, int jobs) {
  const auto dirs = list_samples(ws, split);
  std::vector<DatasetSample> out(dirs.size());
  parallel_for(dirs.size(), jobs, [&](std::size_t i) { out[i] = read_sample(dirs[i]); });
  return out;
}

std::string to_string(UncertainMethod m) {
  switch (m) {
    case UncertainMethod::gradient: return "gradient";
    case UncertainMethod::variance: return "variance";
    case UncertainMethod::trinary: return "trinary";
  }
  return "?";
}

UncertainMethod resolve_method(const std::string& name, Mode mode) {
  if (name == "auto") return mode == Mode::binary ? UncertainMethod::gradient : UncertainMethod::trinary;
  if (name == "gradient") return UncertainMethod::gradient;
  if (name == "variance") return UncertainMethod::variance;
  if (name == "trinary") {
    if (mode != Mode::trinary) throw ConfigError("uncertain_method trinary needs a trinary model");
    return UncertainMethod::trinary;
  }
  throw ConfigError("unknown uncertain_method '" + name + "'");
}

GroundTruth ground_truth(const DatasetSample& s) { return {s.occupied_region(), s.uncertain}; }

ScalarGrid3 predict_sample(const OccupancyModel& model, const DatasetSample& s) {
  const GridSpec& grid = s.uncertain.spec;
  return predict_grid(model, encode(model, s.cloud.points, grid.bounds()), grid);
}

PredictedRegions extract_regions(const ScalarGrid3& prob, const ExtractionConfig& cfg, UncertainMethod method,
                                 const ScalarGrid3* variance) {
  PredictedRegions r;
  if (method == UncertainMethod::trinary) {
    r.occupied = extract_occupied_trinary(prob, cfg);
    r.uncertain = extract_uncertain_trinary(prob, cfg);
    r.occupied_mesh = region_mesh(r.occupied);
    return r;
  }
  const ScalarGrid3 y = occupancy_channel(prob);
  const OccupiedExtraction occ =
      extract_occupied(y, cfg.tau, cfg.filter_occupied ? cfg.min_voxels_for(y.spec) : 0);
  r.occupied = occ.region;
  r.occupied_mesh = occ.mesh;
  if (method == UncertainMethod::gradient) {
    r.uncertain = extract_uncertain_binary(y, cfg);
  } else {
    if (!variance) throw std::invalid_argument("extract_regions: variance method needs a variance grid");
    r.uncertain = extract_uncertain_variance(y, *variance, cfg);
  }
  return r;
}

void write_calibration(const ExtractionConfig& cfg, const std::filesystem::path& path) {
  KeyValues kv;
  kv["tau"] = format_double(cfg.tau);
  kv["tau_u"] = format_double(cfg.tau_u);
  kv["theta_free"] = format_double(cfg.theta[0]);
  kv["theta_occ"] = format_double(cfg.theta[1]);
  kv["theta_unc"] = format_double(cfg.theta[2]);
  write_key_values(kv, path);
}

ExtractionConfig read_calibration(const ExtractionConfig& base, const std::filesystem::path& path) {
  const KeyValues kv = read_key_values(path);
  ExtractionConfig c = base;
  auto get = [&](const char* key, double& dst) {
    const auto it = kv.find(key);
    if (it != kv.end()) dst = parse_double(it->second);
  };
  get("tau", c.tau);
  get("tau_u", c.tau_u);
  get("theta_free", c.theta[0]);
  get("theta_occ", c.theta[1]);
  get("theta_unc", c.theta[2]);
  return c;
}

}  // namespace shapecomp
