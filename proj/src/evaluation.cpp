#include "shapecomp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include "shapecomp/io.hpp"
#include "shapecomp/model.hpp"

namespace shapecomp {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

namespace {

void require_same_lattice(const Region3& a, const Region3& b) {
  if (!(a.spec == b.spec)) throw std::invalid_argument("evaluation: regions live on different lattices");
}

double ratio(std::size_t num, std::size_t den, bool& valid) {
  if (den == 0) {
    valid = false;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionCounts confusion(const Region3& pred_occ, const Region3& pred_unc, const Region3& gt_occ,
                          const Region3& gt_unc, std::span<const Vec3> points) {
  require_same_lattice(pred_occ, pred_unc);
  require_same_lattice(pred_occ, gt_occ);
  require_same_lattice(pred_occ, gt_unc);
  ConfusionCounts c;
  c.total = points.size();
  auto tally = [](ClassCounts& k, bool pred, bool gt, std::size_t i) {
    if (pred && gt)
      ++k.tp;
    else if (pred) {
      ++k.fp;
      k.fp_points.push_back(i);
    } else if (gt)
      ++k.fn;
    else
      ++k.tn;
  };
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto node = pred_occ.spec.nearest(points[i]);
    const bool po = node && pred_occ.contains(*node);
    const bool pu = node && pred_unc.contains(*node);
    const bool go = node && gt_occ.contains(*node);
    const bool gu = node && gt_unc.contains(*node);
    tally(c.occ, po, go, i);
    tally(c.unc, pu, gu, i);
  }
  return c;
}

Box3 regions_box(std::span<const Region3* const> regions, double pad) {
  if (regions.empty()) throw std::invalid_argument("regions_box: no regions");
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Region3* r : regions) {
    for (std::size_t i = 0; i < r->mask.size(); ++i) {
      if (!r->mask[i]) continue;
      const Vec3 p = r->spec.position(i);
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  }
  if (!(lo.array() <= hi.array()).all()) return regions.front()->spec.bounds();
  const double h = 0.5 * regions.front()->spec.spacing;
  return Box3{lo - Vec3::Constant(h), hi + Vec3::Constant(h)}.padded(pad);
}

std::vector<Vec3> confusion_points(const Region3& pred_occ, const Region3& pred_unc, const Region3& gt_occ,
                                   const Region3& gt_unc, std::size_t n, std::uint64_t seed) {
  const std::array<const Region3*, 4> rs{&pred_occ, &pred_unc, &gt_occ, &gt_unc};
  return sample_points(regions_box(rs), n, seed);
}

SegmentationMetrics segmentation_metrics(const ClassCounts& c) {
  SegmentationMetrics m;
  m.iou = ratio(c.tp, c.tp + c.fp + c.fn, m.iou_valid);
  m.precision = ratio(c.tp, c.tp + c.fp, m.precision_valid);
  m.recall = ratio(c.tp, c.tp + c.fn, m.recall_valid);
  m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, m.f1_valid);
  return m;
}

GraspRisks grasp_risks(const ConfusionCounts& c) {
  GraspRisks r;
  r.gcr = ratio(c.occ.fn + c.unc.fn, c.occ.tp + c.occ.fn + c.unc.tp + c.unc.fn, r.gcr_valid);
  r.gmr = ratio(c.occ.fp, c.occ.fp + c.occ.tp, r.gmr_valid);
  std::vector<std::size_t> a = c.occ.fp_points, b = c.unc.fp_points, u;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(u));
  r.ger = ratio(u.size(), c.occ.fp + c.occ.tn, r.ger_valid);
  return r;
}

namespace {

// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection 5.1.5).
Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

using BgPoint = bg::model::point<double, 3, bg::cs::cartesian>;
using BgBox = bg::model::box<BgPoint>;

// Mean distance from `points` to the surface of `mesh` (both already scaled).
double mean_surface_distance(const std::vector<Vec3>& points, const TriangleMesh& mesh, double scale) {
  std::vector<std::pair<BgBox, std::size_t>> boxes;
  boxes.reserve(mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
    for (auto v : mesh.triangles[t]) {
      lo = lo.cwiseMin(mesh.vertices[v] * scale);
      hi = hi.cwiseMax(mesh.vertices[v] * scale);
    }
    boxes.emplace_back(BgBox(BgPoint(lo.x(), lo.y(), lo.z()), BgPoint(hi.x(), hi.y(), hi.z())), t);
  }
  const bgi::rtree<std::pair<BgBox, std::size_t>, bgi::quadratic<16>> tree(boxes.begin(), boxes.end());
  auto tri_distance = [&](std::size_t t, const Vec3& p) {
    const auto& tri = mesh.triangles[t];
    return (p - closest_on_triangle(p, mesh.vertices[tri[0]] * scale, mesh.vertices[tri[1]] * scale,
                                    mesh.vertices[tri[2]] * scale))
        .norm();
  };
  double sum = 0.0;
  std::vector<std::pair<BgBox, std::size_t>> hits;
  for (const Vec3& p : points) {
    // The nearest box gives an upper bound; every closer triangle has its box inside that range.
    hits.clear();
    tree.query(bgi::nearest(BgPoint(p.x(), p.y(), p.z()), 1), std::back_inserter(hits));
    const double bound = tri_distance(hits.front().second, p);
    const BgBox range(BgPoint(p.x() - bound, p.y() - bound, p.z() - bound),
                      BgPoint(p.x() + bound, p.y() + bound, p.z() + bound));
    hits.clear();
    tree.query(bgi::intersects(range), std::back_inserter(hits));
    double best = bound;
    for (const auto& h : hits) best = std::min(best, tri_distance(h.second, p));
    sum += best;
  }
  return sum / static_cast<double>(points.size());
}

}  // namespace

double chamfer_l1(const TriangleMesh& mesh, const TriangleMesh& reference, std::size_t n_samples,
                  std::uint64_t seed) {
  if (mesh.triangles.empty() || reference.triangles.empty()) throw std::invalid_argument("chamfer_l1: empty mesh");
  if (n_samples == 0) throw std::invalid_argument("chamfer_l1: n_samples must be > 0");
  const double extent = reference.bounds().extent().maxCoeff();
  if (!(extent > 0)) throw std::invalid_argument("chamfer_l1: degenerate reference mesh");
  const double scale = 1.0 / extent;
  auto samples = [&](const TriangleMesh& m, std::uint64_t s) {
    std::vector<Vec3> pts = sample_surface(m, n_samples, s).points;
    for (auto& p : pts) p *= scale;
    return pts;
  };
  const double ab = mean_surface_distance(samples(mesh, seed), reference, scale);
  const double ba = mean_surface_distance(samples(reference, seed ^ 0x5bd1e995ull), mesh, scale);
  return 0.5 * (ab + ba);
}

SampleReport evaluate_regions(const std::string& id, const Region3& pred_occ, const Region3& pred_unc,
                              const Region3& gt_occ, const Region3& gt_unc, const EvaluationParams& params) {
  SampleReport r;
  r.id = id;
  const auto pts = confusion_points(pred_occ, pred_unc, gt_occ, gt_unc, params.confusion_samples, params.seed);
  const ConfusionCounts c = confusion(pred_occ, pred_unc, gt_occ, gt_unc, pts);
  r.occ = segmentation_metrics(c.occ);
  r.unc = segmentation_metrics(c.unc);
  r.risks = grasp_risks(c);
  auto cd = [&](const Region3& pred, const Region3& gt) {
    const TriangleMesh pm = region_mesh(pred), gm = region_mesh(gt);
    if (pm.triangles.empty() || gm.triangles.empty()) return std::numeric_limits<double>::quiet_NaN();
    return chamfer_l1(pm, gm, params.chamfer_samples, params.seed + 1);
  };
  r.cd_occ = cd(pred_occ, gt_occ);
  r.cd_unc = cd(pred_unc, gt_unc);
  return r;
}

SampleReport mean_report(std::span<const SampleReport> rows) {
  SampleReport m;
  m.id = "mean";
  auto mean = [&](auto get) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      const double v = get(r);
      if (std::isnan(v)) continue;
      s += v;
      ++n;
    }
    return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
  };
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  m.occ.iou = mean([&](const SampleReport& r) { return r.occ.iou_valid ? r.occ.iou : nan; });
  m.occ.f1 = mean([&](const SampleReport& r) { return r.occ.f1_valid ? r.occ.f1 : nan; });
  m.occ.precision = mean([&](const SampleReport& r) { return r.occ.precision_valid ? r.occ.precision : nan; });
  m.occ.recall = mean([&](const SampleReport& r) { return r.occ.recall_valid ? r.occ.recall : nan; });
  m.cd_occ = mean([](const SampleReport& r) { return r.cd_occ; });
  m.unc.iou = mean([&](const SampleReport& r) { return r.unc.iou_valid ? r.unc.iou : nan; });
  m.unc.f1 = mean([&](const SampleReport& r) { return r.unc.f1_valid ? r.unc.f1 : nan; });
  m.unc.precision = mean([&](const SampleReport& r) { return r.unc.precision_valid ? r.unc.precision : nan; });
  m.unc.recall = mean([&](const SampleReport& r) { return r.unc.recall_valid ? r.unc.recall : nan; });
  m.cd_unc = mean([](const SampleReport& r) { return r.cd_unc; });
  m.risks.gcr = mean([&](const SampleReport& r) { return r.risks.gcr_valid ? r.risks.gcr : nan; });
  m.risks.gmr = mean([&](const SampleReport& r) { return r.risks.gmr_valid ? r.risks.gmr : nan; });
  m.risks.ger = mean([&](const SampleReport& r) { return r.risks.ger_valid ? r.risks.ger : nan; });
  return m;
}

void write_report(std::span<const SampleReport> rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "id,iou_occ,f1_occ,prec_occ,rec_occ,cd_occ,iou_unc,f1_unc,prec_unc,rec_unc,cd_unc,gcr,gmr,ger\n";
  auto line = [&](const SampleReport& r) {
    const double v[] = {r.occ.iou, r.occ.f1, r.occ.precision, r.occ.recall, r.cd_occ,     r.unc.iou, r.unc.f1,
                        r.unc.precision, r.unc.recall, r.cd_unc, r.risks.gcr, r.risks.gmr, r.risks.ger};
    out << r.id;
    for (double x : v) out << ',' << (std::isnan(x) ? std::string("nan") : format_double(x));
    out << '\n';
  };
  for (const auto& r : rows) line(r);
  line(mean_report(rows));
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------

std::vector<double> default_sweep() {
  std::vector<double> v;
  for (int i = 1; i <= 19; ++i) v.push_back(i / 20.0);
  return v;
}

std::size_t best_sweep_index(std::span<const double> values, std::span<const double> scores) {
  if (values.empty() || values.size() != scores.size()) throw std::invalid_argument("best_sweep_index: bad sweep");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (scores[i] > scores[best]) {
      best = i;
    } else if (scores[i] == scores[best]) {
      const double di = std::abs(values[i] - 0.5), db = std::abs(values[best] - 0.5);
      constexpr double eps = 1e-9;  // 0.3 and 0.7 are not equidistant from 0.5 in binary
      if (di < db - eps || (std::abs(di - db) <= eps && values[i] < values[best])) best = i;
    }
  }
  return best;
}

namespace {

struct Pooled {
  std::size_t tp = 0, fp = 0, fn = 0;
  void add(const Region3& pred, const Region3& gt) {
    require_same_lattice(pred, gt);
    for (std::size_t i = 0; i < pred.mask.size(); ++i) {
      const bool p = pred.mask[i], g = gt.mask[i];
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
    }
  }
  double iou() const {
    const std::size_t d = tp + fp + fn;
    return d ? static_cast<double>(tp) / static_cast<double>(d) : 0.0;
  }
};

}  // namespace

CalibrationResult calibrate(std::span<const CalibrationItem> items, const ExtractionConfig& base,
                            std::span<const double> sweep) {
  if (items.empty()) throw std::invalid_argument("calibrate: no validation items");
  if (sweep.empty()) throw std::invalid_argument("calibrate: empty sweep");
  for (double v : sweep)
    if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument("calibrate: sweep values must lie in (0, 1)");
  const int channels = items.front().prob.channels;
  for (const auto& it : items)
    if (it.prob.channels != channels) throw std::invalid_argument("calibrate: mixed grid channel counts");

  CalibrationResult out;
  out.config = base;
  std::vector<double> values(sweep.begin(), sweep.end());
  std::vector<double> scores;

  if (channels == 1) {
    for (double tau : values) {
      Pooled p;
      for (const auto& it : items) {
        ExtractionConfig c = base;
        c.tau = tau;
        p.add(occupied_region(it.prob, tau, c.filter_occupied ? c.min_voxels_for(it.prob.spec) : 0), it.gt_occ);
      }
      scores.push_back(p.iou());
      out.sweep.push_back({"tau", tau, p.iou()});
    }
    out.config.tau = values[best_sweep_index(values, scores)];

    std::vector<ScalarGrid3> grads;
    for (const auto& it : items) grads.push_back(occupancy_gradient(it.prob));
    std::vector<double> uvals, uscores;
    for (double tu : values) {
      if (!(tu < out.config.tau)) continue;
      Pooled p;
      ExtractionConfig c = out.config;
      c.tau_u = tu;
      for (std::size_t i = 0; i < items.size(); ++i)
        p.add(extract_uncertain_binary(items[i].prob, grads[i], c), items[i].gt_unc);
      uvals.push_back(tu);
      uscores.push_back(p.iou());
      out.sweep.push_back({"tau_u", tu, p.iou()});
    }
    if (!uvals.empty()) out.config.tau_u = uvals[best_sweep_index(uvals, uscores)];
    else out.config.tau_u = 0.5 * out.config.tau;
    return out;
  }

  if (channels != 3) throw std::invalid_argument("calibrate: expected 1 or 3 channel grids");
  for (double th : values) {
    Pooled p;
    ExtractionConfig c = base;
    c.theta[1] = th;
    for (const auto& it : items) p.add(extract_occupied_trinary(it.prob, c), it.gt_occ);
    scores.push_back(p.iou());
    out.sweep.push_back({"theta_occ", th, p.iou()});
  }
  out.config.theta[1] = values[best_sweep_index(values, scores)];
  scores.clear();
  for (double th : values) {
    Pooled p;
    ExtractionConfig c = out.config;
    c.theta[2] = th;
    for (const auto& it : items) p.add(extract_uncertain_trinary(it.prob, c), it.gt_unc);
    scores.push_back(p.iou());
    out.sweep.push_back({"theta_unc", th, p.iou()});
  }
  out.config.theta[2] = values[best_sweep_index(values, scores)];
  return out;
}

void write_sweep(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "parameter,value,iou\n";
  for (const auto& r : rows) out << r.parameter << ',' << format_double(r.value) << ',' << format_double(r.iou) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace shapecomp
