#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>

#include "shapecomp/commands.hpp"
#include "test_util.hpp"

using namespace shapecomp;
namespace fs = std::filesystem;

namespace {

// Small enough that the whole pipeline runs in a few seconds.
RunConfig tiny_config() {
  RunConfig c;
  for (const char* kv : {"n_train=4", "n_val=2", "n_test=2", "n_objects=10", "grid_resolution=20",
                         "n_queries=256", "ambiguity_samples=12", "signature_size=24", "image_size=80",
                         "focal_px=90", "enc1=8", "enc2=8", "enc3=16", "local_dim=4", "lattice=4", "hidden=16",
                         "max_points=256", "queries_per_sample=64", "batch_size=2", "max_epochs=2",
                         "confusion_samples=2000", "chamfer_samples=300", "n_grasps=8", "mc_passes=2",
                         "sweep=0.3,0.5,0.7"})
    c.set_assignment(kv);
  return c;
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = test::read_text(e.path());
  return out;
}

std::size_t data_rows(const fs::path& csv) {
  std::size_t n = 0;
  for (const auto& line : split(test::read_text(csv), '\n')) n += !line.empty();
  return n - 1;  // header
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("unknown config keys and bad values are rejected") {
  RunConfig c;
  CHECK_THROWS_AS(c.set("no_such_key", "1"), ConfigError);
  CHECK_THROWS_AS(c.set_assignment("seed"), ConfigError);
  c.set("tau_u", "0.9");
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = RunConfig();
  c.set("dataset_mode", "sim2real");
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = RunConfig();
  CHECK_NOTHROW(validate(c));

  const test::TempDir dir;
  test::write_text(dir.path / "bad.cfg", "seed = 3\nmystery = 1\n");
  CHECK_THROWS_AS(RunConfig::load(dir.path / "bad.cfg"), ConfigError);
  test::write_text(dir.path / "good.cfg", "# comment\nseed = 3\nmodel_mode = binary\n");
  const RunConfig loaded = RunConfig::load(dir.path / "good.cfg");
  CHECK(loaded.get_int("seed") == 3);
  CHECK(loaded.get("model_mode") == "binary");
  CHECK(loaded.get_int("n_train") == 500);
}

TEST_CASE("config files round-trip") {
  const test::TempDir dir;
  RunConfig c = tiny_config();
  c.set("seed", "99");
  c.write(dir.path / "c.txt");
  CHECK(RunConfig::load(dir.path / "c.txt").values() == c.values());
}

TEST_CASE("novel-instance splits use disjoint objects in 70/10/20 proportion") {
  for (int n : {10, 20, 60, 201}) {
    const auto tr = split_objects(n, "train"), va = split_objects(n, "val"), te = split_objects(n, "test");
    CHECK(tr.size() + va.size() + te.size() == static_cast<std::size_t>(n));
    CHECK(std::abs(static_cast<double>(tr.size()) - 0.7 * n) <= 1.0);
    CHECK(std::abs(static_cast<double>(va.size()) - 0.1 * n) <= 1.0);
    CHECK(std::abs(static_cast<double>(te.size()) - 0.2 * n) <= 1.0);
    std::set<int> all(tr.begin(), tr.end());
    all.insert(va.begin(), va.end());
    all.insert(te.begin(), te.end());
    CHECK(all.size() == static_cast<std::size_t>(n));
  }
  RunConfig c = tiny_config();
  c.set("dataset_mode", "novel-instance");
  c.set("n_train", "30");
  c.set("n_test", "10");
  const DatasetPlan plan = plan_dataset(c);
  std::set<int> train_objects, test_objects;
  for (const auto& it : plan.items) {
    if (it.split == "train") train_objects.insert(it.object_index);
    if (it.split == "test") test_objects.insert(it.object_index);
  }
  for (int o : test_objects) CHECK(train_objects.count(o) == 0);
  CHECK(!test_objects.empty());

  c.set("dataset_mode", "novel-view");
  std::set<int> view_train;
  for (const auto& it : plan_dataset(c).items)
    if (it.split == "train") view_train.insert(it.object_index);
  CHECK(view_train.size() > train_objects.size());
}

TEST_CASE("dataset generation is deterministic down to the bytes") {
  const test::TempDir a, b;
  std::ostringstream log;
  RunConfig c = tiny_config();
  c.set("seed", "7");
  cmd_gen(c, Workspace{a.path}, log);
  c.set("jobs", "2");  // thread count must not matter
  cmd_gen(c, Workspace{b.path}, log);
  const auto ta = tree_contents(a.path / "samples"), tb = tree_contents(b.path / "samples");
  CHECK(ta.size() == 8 * 4 + 1);
  std::size_t same = 0;
  for (const auto& [k, v] : ta) same += tb.count(k) && tb.at(k) == v;
  // Only the resolved config differs (jobs).
  CHECK(same == ta.size() - 1);
  CHECK(ta.size() == tb.size());
}

TEST_CASE("evaluating the ground truth as prediction gives IoU 1") {
  const test::TempDir dir;
  const Workspace ws{dir.path};
  RunConfig c = tiny_config();
  c.set("model_mode", "trinary");
  std::ostringstream log;
  cmd_gen(c, ws, log);
  for (const auto& s : load_split(ws, "test")) {
    const auto out = ws.results_dir(Mode::trinary, "test") / s.id;
    fs::create_directories(out);
    const GroundTruth gt = ground_truth(s);
    write_region(gt.occupied, out / "occupied.sg3");
    write_region(gt.uncertain, out / "uncertain.sg3");
  }
  const SampleReport mean = cmd_eval(c, ws, log);
  CHECK(mean.occ.iou == 1.0);
  CHECK(mean.risks.gcr == 0.0);
  CHECK(mean.risks.ger == 0.0);
  CHECK(data_rows(ws.results_dir(Mode::trinary, "test") / "report.csv") == 3);
}

TEST_CASE("missing inputs are reported as I/O errors") {
  const test::TempDir dir;
  const Workspace ws{dir.path};
  std::ostringstream log;
  CHECK_THROWS_AS(cmd_train(tiny_config(), ws, log), IoError);
  CHECK_THROWS_AS(cmd_eval(tiny_config(), ws, log), IoError);
  RunConfig bad = tiny_config();
  bad.set("n_train", "-1");
  CHECK_THROWS_AS(cmd_gen(bad, ws, log), ConfigError);
}

TEST_CASE("the pipeline runs end to end and is rerunnable") {
  const test::TempDir dir;
  const Workspace ws{dir.path};
  std::ostringstream log;
  for (const char* mode : {"binary", "trinary"}) {
    RunConfig c = tiny_config();
    c.set("model_mode", mode);
    const Mode m = parse_mode(mode);
    if (m == Mode::binary) cmd_gen(c, ws, log);
    const auto samples_before = tree_contents(ws.samples());
    cmd_train(c, ws, log);
    CHECK(fs::exists(ws.checkpoint(m)));
    CHECK(data_rows(ws.model_dir(m) / "train_log.csv") == 2);
    cmd_calibrate(c, ws, log);
    // one row per sweep value for the primary threshold
    std::size_t primary = 0;
    for (const auto& line : split(test::read_text(ws.model_dir(m) / "calibration.csv"), '\n'))
      primary += line.rfind(m == Mode::binary ? "tau," : "theta_occ,", 0) == 0;
    CHECK(primary == 3);
    CHECK(fs::exists(ws.calibration(m)));
    cmd_extract(c, ws, log);
    const auto res = ws.results_dir(m, "test");
    const auto first = tree_contents(res);
    cmd_extract(c, ws, log);
    CHECK(tree_contents(res) == first);
    cmd_eval(c, ws, log);
    const auto grasps = cmd_grasp(c, ws, log);
    CHECK(grasps.size() == 2);
    CHECK(tree_contents(ws.samples()) == samples_before);
    for (const char* f : {"report.csv", "eval_config.txt", "grasp_summary.csv", "grasp_config.txt", "config.txt"})
      CHECK_MESSAGE(fs::exists(res / f), f);
    for (const auto& id : {"test_00000", "test_00001"})
      for (const char* f : {"occupied.sg3", "uncertain.sg3", "occupied.obj", "uncertain.obj", "params.txt"})
        CHECK_MESSAGE(fs::exists(res / id / f), id << '/' << f);
  }
}

}

TEST_SUITE("cli") {

TEST_CASE("exit codes distinguish usage, config and I/O failures") {
  const test::TempDir dir;
  const std::string cli = SHAPECOMP_CLI;
  auto run = [&](const std::string& args) {
    const int status = std::system((cli + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  CHECK(run("keys") == 0);
  CHECK(run("--bogus-flag gen") == 2);
  CHECK(run("gen --set nonsense=1 --out " + dir.path.string()) == 2);
  CHECK(run("gen --n-train -3 --out " + dir.path.string()) == 2);
  CHECK(run("eval --out " + (dir.path / "missing").string()) == 3);
}

TEST_CASE("smoke run: gen, train, calibrate, extract, eval, grasp") {
  const test::TempDir dir;
  const std::string cli = SHAPECOMP_CLI;
  const std::string common = " --out " + dir.path.string() +
                             " --set grid_resolution=24 --set ambiguity_samples=24 --set confusion_samples=5000"
                             " --set chamfer_samples=1000 --set n_grasps=16 --n-train 30 --n-val 10 --n-test 10";
  for (const char* step : {"gen", "train --epochs 5", "calibrate", "extract", "eval", "grasp"}) {
    const int status = std::system((cli + " " + step + common + " >/dev/null 2>&1").c_str());
    REQUIRE_MESSAGE(WEXITSTATUS(status) == 0, step);
  }
  const Workspace ws{dir.path};
  CHECK(list_samples(ws, "train").size() == 30);
  CHECK(fs::exists(ws.samples() / "config.txt"));
  for (const char* f : {"model.ckpt", "train_log.csv", "config.txt", "calibration.csv", "calibration.txt",
                        "calibration_config.txt"})
    CHECK_MESSAGE(fs::exists(ws.model_dir(Mode::trinary) / f), f);
  const auto res = ws.results_dir(Mode::trinary, "test");
  CHECK(data_rows(res / "report.csv") == 11);
  CHECK(data_rows(res / "grasp_summary.csv") == 11);
  CHECK(fs::exists(res / "grasps" / "test_00009.txt"));
}

}
