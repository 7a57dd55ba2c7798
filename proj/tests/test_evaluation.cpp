#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "shapecomp/config.hpp"
#include "shapecomp/evaluation.hpp"
#include "shapecomp/io.hpp"
#include "test_util.hpp"

using namespace shapecomp;

namespace {

GridSpec small_grid(int n = 10) {
  GridSpec g;
  g.spacing = 0.1;
  g.dims = {n, n, n};
  return g;
}

Region3 random_region(const GridSpec& g, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution b(p);
  Region3 r(g);
  for (auto& m : r.mask) m = b(rng);
  return r;
}

// Unit square in the z = z0 plane, two triangles.
TriangleMesh square(double z0, double scale = 1.0) {
  TriangleMesh m;
  m.vertices = {Vec3(0, 0, z0) * scale, Vec3(1, 0, z0) * scale, Vec3(1, 1, z0) * scale, Vec3(0, 1, z0) * scale};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("confusion counts match a per-point loop") {
  std::mt19937_64 rng(21);
  const GridSpec g = small_grid();
  const Region3 po = random_region(g, 0.3, rng), pu = random_region(g, 0.2, rng);
  const Region3 go = random_region(g, 0.3, rng), gu = random_region(g, 0.2, rng);
  const auto pts = sample_points(g.bounds(), 1000, 5);
  const ConfusionCounts c = confusion(po, pu, go, gu, pts);

  std::size_t tp[2]{}, fp[2]{}, fn[2]{}, tn[2]{};
  std::set<std::size_t> fps[2];
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto n = *g.nearest(pts[i]);
    const bool pred[2] = {po.mask[n] != 0, pu.mask[n] != 0};
    const bool gt[2] = {go.mask[n] != 0, gu.mask[n] != 0};
    for (int k = 0; k < 2; ++k) {
      tp[k] += pred[k] && gt[k];
      fn[k] += !pred[k] && gt[k];
      tn[k] += !pred[k] && !gt[k];
      if (pred[k] && !gt[k]) {
        ++fp[k];
        fps[k].insert(i);
      }
    }
  }
  const ClassCounts* cc[2] = {&c.occ, &c.unc};
  for (int k = 0; k < 2; ++k) {
    CHECK(cc[k]->tp == tp[k]);
    CHECK(cc[k]->fp == fp[k]);
    CHECK(cc[k]->fn == fn[k]);
    CHECK(cc[k]->tn == tn[k]);
    CHECK(cc[k]->tp + cc[k]->fp + cc[k]->fn + cc[k]->tn == pts.size());
    CHECK(std::set<std::size_t>(cc[k]->fp_points.begin(), cc[k]->fp_points.end()) == fps[k]);
  }
  CHECK(c.total == pts.size());
}

TEST_CASE("perfect and empty predictions") {
  std::mt19937_64 rng(2);
  const GridSpec g = small_grid();
  const Region3 go = random_region(g, 0.3, rng), gu = random_region(g, 0.1, rng);
  const auto pts = sample_points(g.bounds(), 2000, 1);
  const ConfusionCounts same = confusion(go, gu, go, gu, pts);
  CHECK(same.occ.fp == 0);
  CHECK(same.occ.fn == 0);
  CHECK(same.unc.fp == 0);
  CHECK(same.unc.fn == 0);
  CHECK(segmentation_metrics(same.occ).iou == 1.0);

  const Region3 none(g);
  const ConfusionCounts empty = confusion(none, none, go, gu, pts);
  CHECK(empty.occ.tp == 0);
  CHECK(empty.occ.fn == same.occ.tp);
  CHECK(empty.unc.fn == same.unc.tp);
}

TEST_CASE("confusion rejects mismatched lattices") {
  const Region3 a(small_grid(10)), b(small_grid(11));
  const std::vector<Vec3> pts{Vec3::Zero()};
  CHECK_THROWS_AS(confusion(a, a, b, a, pts), std::invalid_argument);
}

TEST_CASE("segmentation metrics follow their formulas") {
  ClassCounts c;
  c.tp = 50;
  SegmentationMetrics m = segmentation_metrics(c);
  CHECK(m.iou == 1.0);
  CHECK(m.f1 == 1.0);
  c.fp = 50;
  m = segmentation_metrics(c);
  CHECK(m.precision == 0.5);
  CHECK(m.recall == 1.0);
  CHECK(m.iou == 0.5);
  CHECK(m.f1 == 2.0 / 3.0);
  CHECK(m.all_valid());

  const ClassCounts zero;
  m = segmentation_metrics(zero);
  CHECK_FALSE(m.iou_valid);
  CHECK_FALSE(m.f1_valid);
  CHECK(m.iou == 0.0);

  // An empty prediction against a non-empty truth scores zero rather than dropping out.
  ClassCounts missed;
  missed.fn = 20;
  m = segmentation_metrics(missed);
  CHECK(m.iou_valid);
  CHECK(m.iou == 0.0);
  CHECK(m.f1_valid);
  CHECK(m.recall_valid);
  CHECK_FALSE(m.precision_valid);
}

TEST_CASE("metric inequalities hold on random counts") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> d(0, 1000);
  for (int t = 0; t < 5000; ++t) {
    ClassCounts c;
    c.tp = d(rng) + 1;
    c.fp = d(rng);
    c.fn = d(rng);
    c.tn = d(rng);
    const SegmentationMetrics m = segmentation_metrics(c);
    CHECK(m.f1 == doctest::Approx(2 * m.precision * m.recall / (m.precision + m.recall)).epsilon(1e-12));
    CHECK(m.iou <= std::min(m.precision, m.recall) + 1e-15);
    CHECK(std::min(m.precision, m.recall) <= m.f1 + 1e-15);
    for (double v : {m.iou, m.f1, m.precision, m.recall}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("grasp risks from hand-computed counts") {
  ConfusionCounts c;
  c.occ.tp = 80;
  c.occ.fn = 20;
  c.unc.tp = 30;
  c.unc.fn = 10;
  CHECK(grasp_risks(c).gcr == doctest::Approx(30.0 / 140.0).epsilon(1e-12));

  ConfusionCounts d;
  d.occ.fp = 10;
  d.occ.tp = 90;
  CHECK(grasp_risks(d).gmr == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("GER counts shared false positives once") {
  ConfusionCounts c;
  for (std::size_t i = 0; i < 10; ++i) c.occ.fp_points.push_back(i);  // 0..9
  for (std::size_t i = 5; i < 15; ++i) c.unc.fp_points.push_back(i);  // 5..14
  c.occ.fp = 10;
  c.unc.fp = 10;
  c.occ.tn = 85;
  const GraspRisks r = grasp_risks(c);
  CHECK(r.ger == doctest::Approx(15.0 / 95.0).epsilon(1e-12));
  CHECK(r.ger_valid);
}

TEST_CASE("GER from overlapping predicted regions matches a set-union oracle") {
  std::mt19937_64 rng(8);
  const GridSpec g = small_grid();
  const Region3 po = random_region(g, 0.4, rng), pu = random_region(g, 0.4, rng);
  const Region3 go = random_region(g, 0.2, rng), gu = random_region(g, 0.1, rng);
  const auto pts = sample_points(g.bounds(), 5000, 3);
  const ConfusionCounts c = confusion(po, pu, go, gu, pts);
  std::size_t union_fp = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto n = *g.nearest(pts[i]);
    union_fp += (po.mask[n] && !go.mask[n]) || (pu.mask[n] && !gu.mask[n]);
  }
  const GraspRisks r = grasp_risks(c);
  CHECK(union_fp < c.occ.fp + c.unc.fp);  // the sets do overlap here
  CHECK(r.ger == doctest::Approx(double(union_fp) / double(c.occ.fp + c.occ.tn)).epsilon(1e-12));
  for (double v : {r.gcr, r.gmr}) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("zero denominators give zero risks with flags") {
  const GraspRisks r = grasp_risks(ConfusionCounts{});
  CHECK(r.gcr == 0.0);
  CHECK(r.gmr == 0.0);
  CHECK(r.ger == 0.0);
  CHECK_FALSE(r.gcr_valid);
  CHECK_FALSE(r.gmr_valid);
  CHECK_FALSE(r.ger_valid);
}

TEST_CASE("chamfer distance between parallel squares equals their offset") {
  for (double d : {0.05, 0.1, 0.2}) {
    const double cd = chamfer_l1(square(d), square(0.0), 20000, 4);
    // Reference already has unit extent; edge effects are second order in d.
    CHECK(cd == doctest::Approx(d).epsilon(0.05));
  }
  CHECK(chamfer_l1(square(0.0), square(0.0), 20000, 4) < 1e-3);
}

TEST_CASE("chamfer distance is scale-normalized and nearly symmetric") {
  const double a = chamfer_l1(square(0.1), square(0.0), 5000, 9);
  const double b = chamfer_l1(square(0.1, 10.0), square(0.0, 10.0), 5000, 9);
  CHECK(a == doctest::Approx(b).epsilon(1e-6));
  const double c = chamfer_l1(square(0.0), square(0.1), 5000, 9);
  CHECK(a == doctest::Approx(c).epsilon(0.05));
  CHECK_THROWS_AS(chamfer_l1(TriangleMesh{}, square(0.0), 10, 1), std::invalid_argument);
}

TEST_CASE("identical meshes have near-zero chamfer distance") {
  TriangleMesh cube;
  cube.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0),
                   Vec3(0, 0, 1), Vec3(1, 0, 1), Vec3(1, 1, 1), Vec3(0, 1, 1)};
  cube.triangles = {{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
                    {1, 2, 6}, {1, 6, 5}, {2, 3, 7}, {2, 7, 6}, {3, 0, 4}, {3, 4, 7}};
  CHECK(chamfer_l1(cube, cube, 20000, 2) < 1e-3);
}

TEST_CASE("sweep selection breaks ties toward one half, then low") {
  const std::vector<double> v{0.3, 0.4, 0.6, 0.7};
  CHECK(best_sweep_index(v, std::vector<double>{0.1, 0.9, 0.2, 0.3}) == 1);
  CHECK(best_sweep_index(v, std::vector<double>{0.5, 0.5, 0.5, 0.5}) == 1);  // 0.4 and 0.6 equidistant
  CHECK(best_sweep_index(v, std::vector<double>{0.8, 0.1, 0.1, 0.8}) == 0);
  CHECK(best_sweep_index(std::vector<double>{0.5}, std::vector<double>{0.0}) == 0);
  CHECK_THROWS_AS(best_sweep_index(v, std::vector<double>{1.0}), std::invalid_argument);
  const auto sweep = default_sweep();
  REQUIRE(sweep.size() == 19);
  CHECK(sweep.front() == doctest::Approx(0.05));
  CHECK(sweep.back() == doctest::Approx(0.95));
  // same doubles as the default config sweep, so written rows round-trip
  CHECK(sweep == sweep_values(RunConfig{}));
  CHECK(sweep[2] == 0.15);
}

TEST_CASE("calibration recovers the threshold of a constructed radial field") {
  // prob decreases with distance from the centre; the true region is the 0.4 superlevel set.
  const GridSpec g = small_grid(24);
  ScalarGrid3 prob(g, 1);
  Region3 gt(g);
  const Vec3 c = g.bounds().center();
  for (std::size_t n = 0; n < g.node_count(); ++n) {
    const double r = (g.position(n) - c).norm();
    prob.at(n) = std::exp(-r * r / 0.8);
    gt.mask[n] = prob.at(n) >= 0.4;
  }
  gt.relabel();
  std::vector<CalibrationItem> items{{prob, gt, Region3(g)}};
  ExtractionConfig base;
  base.min_voxels = 0;
  const CalibrationResult res = calibrate(items, base, default_sweep());
  CHECK(std::abs(res.config.tau - 0.4) <= 0.05 + 1e-12);
  const auto sweep = default_sweep();
  CHECK(std::find_if(sweep.begin(), sweep.end(), [&](double v) { return std::abs(v - res.config.tau) < 1e-15; }) !=
        sweep.end());
  CHECK(res.config.tau_u < res.config.tau);
  std::size_t n_tau = 0;
  for (const auto& row : res.sweep) n_tau += row.parameter == "tau";
  CHECK(n_tau == sweep.size());

  const std::vector<double> single{0.5};
  CHECK(calibrate(items, base, single).config.tau == 0.5);
  const std::vector<double> bad{0.0, 0.5};
  CHECK_THROWS_AS(calibrate(items, base, bad), std::invalid_argument);
  CHECK_THROWS_AS(calibrate(std::span<const CalibrationItem>{}, base, single), std::invalid_argument);
}

TEST_CASE("trinary calibration sweeps both class thresholds") {
  const GridSpec g = small_grid(8);
  ScalarGrid3 prob(g, 3);
  Region3 go(g), gu(g);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t n = 0; n < g.node_count(); ++n) {
    double a = u(rng), b = u(rng), d = u(rng), s = a + b + d;
    prob.at(n, 0) = a / s;
    prob.at(n, 1) = b / s;
    prob.at(n, 2) = d / s;
    go.mask[n] = b > a && b > d;
    gu.mask[n] = d > a && d > b;
  }
  std::vector<CalibrationItem> items{{prob, go, gu}};
  ExtractionConfig base;
  base.min_voxels = 0;
  const CalibrationResult res = calibrate(items, base, default_sweep());
  std::size_t occ = 0, unc = 0;
  for (const auto& row : res.sweep) {
    occ += row.parameter == "theta_occ";
    unc += row.parameter == "theta_unc";
  }
  CHECK(occ == 19);
  CHECK(unc == 19);
  CHECK(res.config.theta[0] == base.theta[0]);
}

TEST_CASE("report CSV has the fixed columns and a mean row") {
  const test::TempDir dir;
  SampleReport a, b;
  a.id = "test_00000";
  a.occ.iou = 0.5;
  a.cd_unc = std::numeric_limits<double>::quiet_NaN();
  b.id = "test_00001";
  b.occ.iou = 1.0;
  b.cd_unc = 0.25;
  const std::vector<SampleReport> rows{a, b};
  write_report(rows, dir.path / "report.csv");
  const auto lines = split(test::read_text(dir.path / "report.csv"), '\n');
  REQUIRE(lines.size() >= 4);
  CHECK(lines[0] == "id,iou_occ,f1_occ,prec_occ,rec_occ,cd_occ,iou_unc,f1_unc,prec_unc,rec_unc,cd_unc,gcr,gmr,ger");
  CHECK(lines[3].rfind("mean,", 0) == 0);
  const SampleReport m = mean_report(rows);
  CHECK(m.occ.iou == 0.75);
  CHECK(m.cd_unc == 0.25);
  CHECK(split(lines[1], ',').size() == 14);
}

TEST_CASE("evaluating the ground truth against itself is perfect") {
  std::mt19937_64 rng(12);
  const GridSpec g = small_grid(16);
  Region3 go(g), gu(g);
  for (int i = 3; i < 10; ++i)
    for (int j = 3; j < 10; ++j)
      for (int k = 3; k < 10; ++k) go.mask[g.index(i, j, k)] = 1;
  for (int i = 10; i < 13; ++i)
    for (int j = 3; j < 10; ++j)
      for (int k = 3; k < 10; ++k) gu.mask[g.index(i, j, k)] = 1;
  go.relabel();
  gu.relabel();
  EvaluationParams p;
  p.confusion_samples = 20000;
  p.chamfer_samples = 5000;
  const SampleReport r = evaluate_regions("x", go, gu, go, gu, p);
  CHECK(r.occ.iou == 1.0);
  CHECK(r.unc.iou == 1.0);
  CHECK(r.risks.gcr == 0.0);
  CHECK(r.risks.gmr == 0.0);
  CHECK(r.risks.ger == 0.0);
  CHECK(r.cd_occ < 0.01);
}

}
