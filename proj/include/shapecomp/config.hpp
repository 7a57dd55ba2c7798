#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "shapecomp/evaluation.hpp"
#include "shapecomp/extraction.hpp"
#include "shapecomp/grasping.hpp"
#include "shapecomp/io.hpp"
#include "shapecomp/model.hpp"
#include "shapecomp/synthdata.hpp"

namespace shapecomp {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// Every recognised key with its default.
const std::vector<ConfigKey>& config_keys();

/// Flat key = value settings; only keys from config_keys() are accepted.
class RunConfig {
 public:
  RunConfig();

  /// Defaults overlaid with the file's entries.
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  /// "key=value"
  void set_assignment(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  Vec3 get_vec3(const std::string& key) const;

  const KeyValues& values() const { return values_; }
  void write(const std::filesystem::path& path) const;

 private:
  KeyValues values_;
};

GenerationParams generation_params(const RunConfig& c);
ModelConfig model_config(const RunConfig& c);
TrainConfig train_config(const RunConfig& c);
ExtractionConfig extraction_config(const RunConfig& c);
EvaluationParams evaluation_params(const RunConfig& c);
GraspSampling grasp_sampling(const RunConfig& c);
/// Parses "lo:hi:step" or a comma-separated list.
std::vector<double> sweep_values(const RunConfig& c);

/// Checks every typed key once; throws ConfigError on the first bad value.
void validate(const RunConfig& c);

}  // namespace shapecomp
