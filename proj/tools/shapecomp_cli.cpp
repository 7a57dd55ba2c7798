// Command-line front end: gen, train, calibrate, extract, eval, grasp.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "shapecomp/commands.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kBadConfig = 2, kIoFailure = 3 };

struct Options {
  std::string config_path;
  std::optional<std::string> seed, jobs, mode, split, n_train, n_val, n_test, epochs, dataset_mode;
  std::string out = "out";
  std::vector<std::string> assignments;
};

shapecomp::RunConfig resolve(const Options& o) {
  shapecomp::RunConfig cfg = o.config_path.empty() ? shapecomp::RunConfig() : shapecomp::RunConfig::load(o.config_path);
  auto apply = [&](const char* key, const std::optional<std::string>& v) {
    if (v) cfg.set(key, *v);
  };
  apply("seed", o.seed);
  apply("jobs", o.jobs);
  apply("model_mode", o.mode);
  apply("split", o.split);
  apply("n_train", o.n_train);
  apply("n_val", o.n_val);
  apply("n_test", o.n_test);
  apply("max_epochs", o.epochs);
  apply("dataset_mode", o.dataset_mode);
  for (const auto& a : o.assignments) cfg.set_assignment(a);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shape completion with uncertain regions: dataset synthesis, training and evaluation."};
  app.require_subcommand(1, 1);
  app.fallthrough();

  Options o;
  app.add_option("--config", o.config_path, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "master seed");
  app.add_option("--jobs", o.jobs, "worker threads");
  app.add_option("--out", o.out, "workspace directory")->capture_default_str();
  app.add_option("--set", o.assignments, "override a config key, key=value (repeatable)");
  app.add_option("--mode", o.mode, "model_mode: binary or trinary");
  app.add_option("--split", o.split, "split for extract, eval and grasp");
  app.add_option("--n-train", o.n_train, "training samples");
  app.add_option("--n-val", o.n_val, "validation samples");
  app.add_option("--n-test", o.n_test, "test samples");
  app.add_option("--epochs", o.epochs, "max_epochs");
  app.add_option("--dataset-mode", o.dataset_mode, "novel-view or novel-instance");

  auto* gen = app.add_subcommand("gen", "render and label the train/val/test samples");
  auto* train = app.add_subcommand("train", "fit a binary or trinary occupancy model");
  auto* calibrate = app.add_subcommand("calibrate", "sweep thresholds on the validation split");
  auto* extract = app.add_subcommand("extract", "predict occupied and uncertain regions");
  auto* eval = app.add_subcommand("eval", "score extracted regions against ground truth");
  auto* grasp = app.add_subcommand("grasp", "sample grasps and filter them by the uncertain region");
  auto* keys = app.add_subcommand("keys", "list config keys and defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadConfig;
  }

  try {
    if (*keys) {
      for (const auto& k : shapecomp::config_keys())
        std::cout << k.name << " = " << k.default_value << "    # " << k.help << '\n';
      return kOk;
    }
    const shapecomp::RunConfig cfg = resolve(o);
    const shapecomp::Workspace ws{o.out};
    if (*gen) shapecomp::cmd_gen(cfg, ws, std::cerr);
    if (*train) shapecomp::cmd_train(cfg, ws, std::cerr);
    if (*calibrate) shapecomp::cmd_calibrate(cfg, ws, std::cerr);
    if (*extract) shapecomp::cmd_extract(cfg, ws, std::cerr);
    if (*eval) shapecomp::cmd_eval(cfg, ws, std::cerr);
    if (*grasp) shapecomp::cmd_grasp(cfg, ws, std::cerr);
  } catch (const shapecomp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kBadConfig;
  } catch (const shapecomp::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
