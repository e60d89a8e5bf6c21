#include "sparsepose/metrics.hpp"

#include "sparsepose/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>

namespace sparsepose {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_points(std::span<const Vec3> pts, const char* what) {
  if (pts.empty()) throw DataError(std::string(what) + ": empty model point set");
}

}  // namespace

double add(const Mat3& r_est, const Vec3& t_est, const Mat3& r_gt, const Vec3& t_gt, std::span<const Vec3> model) {
  require_points(model, "add");
  double sum = 0.0;
  for (const auto& x : model) sum += ((r_est * x + t_est) - (r_gt * x + t_gt)).norm();
  return sum / static_cast<double>(model.size());
}

double add_s(const Mat3& r_est, const Vec3& t_est, const Mat3& r_gt, const Vec3& t_gt, std::span<const Vec3> model) {
  require_points(model, "add_s");
  std::vector<Vec3> gt_pts(model.size());
  for (std::size_t i = 0; i < model.size(); ++i) gt_pts[i] = r_gt * model[i] + t_gt;
  const KdTree tree(std::move(gt_pts));
  double sum = 0.0;
  for (const auto& x : model) sum += std::sqrt(tree.nearest(r_est * x + t_est).dist_sq);
  return sum / static_cast<double>(model.size());
}

double auc(std::span<const double> errors, double max_threshold, int steps) {
  if (steps < 1 || !(max_threshold > 0.0)) throw ConfigError("auc: need steps >= 1 and a positive threshold");
  if (errors.empty()) return 0.0;
  double acc = 0.0;
  for (int k = 1; k <= steps; ++k) {
    const double thr = max_threshold * k / steps;
    const auto hits = std::count_if(errors.begin(), errors.end(), [&](double e) { return e < thr; });
    acc += static_cast<double>(hits) / static_cast<double>(errors.size());
  }
  return acc / steps;
}

double mssd(const Mat3& r_est, const Vec3& t_est, const Mat3& r_gt, const Vec3& t_gt, std::span<const Vec3> vertices,
            std::span<const Mat3> symmetries) {
  require_points(vertices, "mssd");
  if (symmetries.empty()) throw ConfigError("mssd: symmetry set must contain the identity");
  double best = kInf;
  for (const auto& s : symmetries) {
    const Mat3 r = r_gt * s;
    double worst = 0.0;
    for (const auto& v : vertices) worst = std::max(worst, ((r_est * v + t_est) - (r * v + t_gt)).norm());
    best = std::min(best, worst);
  }
  return best;
}

double mspd(const Mat3& r_est, const Vec3& t_est, const Mat3& r_gt, const Vec3& t_gt, std::span<const Vec3> vertices,
            std::span<const Mat3> symmetries, const Camera& cam) {
  require_points(vertices, "mspd");
  if (symmetries.empty()) throw ConfigError("mspd: symmetry set must contain the identity");
  std::vector<Vec2> est(vertices.size());
  for (std::size_t i = 0; i < vertices.size(); ++i) est[i] = project(r_est * vertices[i] + t_est, cam).pixel;
  double best = kInf;
  for (const auto& s : symmetries) {
    const Mat3 r = r_gt * s;
    double worst = 0.0;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
      worst = std::max(worst, (est[i] - project(r * vertices[i] + t_gt, cam).pixel).norm());
    }
    best = std::min(best, worst);
  }
  return best;
}

std::vector<double> recall_curve(std::span<const double> errors, std::span<const double> thresholds) {
  std::vector<double> out;
  for (double thr : thresholds) {
    if (errors.empty()) {
      out.push_back(0.0);
      continue;
    }
    const auto hits = std::count_if(errors.begin(), errors.end(), [&](double e) { return e < thr; });
    out.push_back(static_cast<double>(hits) / static_cast<double>(errors.size()));
  }
  return out;
}

std::vector<double> diameter_fractions() {
  std::vector<double> out;
  for (int k = 1; k <= 10; ++k) out.push_back(0.05 * k);
  return out;
}

std::vector<double> millimeter_thresholds() {
  std::vector<double> out;
  for (int k = 1; k <= 10; ++k) out.push_back(0.005 * k);
  return out;
}

std::vector<int> match_estimates(const PoseSet& poses, const SceneGroundTruth& gt) {
  struct Pair {
    double dist;
    int gt, est;
  };
  std::vector<Pair> pairs;
  for (std::size_t g = 0; g < gt.size(); ++g)
    for (std::size_t e = 0; e < poses.size(); ++e)
      if (poses[e].class_id == gt.objects[g].class_id)
        pairs.push_back({(poses[e].translation - gt.objects[g].translation).norm(), static_cast<int>(g), static_cast<int>(e)});
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.dist < b.dist; });
  std::vector<int> match(gt.size(), -1);
  std::vector<char> used(poses.size(), 0);
  for (const auto& p : pairs) {
    if (match[p.gt] >= 0 || used[p.est]) continue;
    match[p.gt] = p.est;
    used[p.est] = 1;
  }
  return match;
}

MetricReport evaluate(const PoseSet& poses, const SceneGroundTruth& gt, const std::vector<ObjectModel>& library,
                      std::span<const Camera> cameras, const EvalOptions& options) {
  if (cameras.empty()) throw ConfigError("evaluate: at least one camera is needed for MSPD");
  if (options.mspd_view < 0 || options.mspd_view >= static_cast<int>(cameras.size())) {
    throw ConfigError("evaluate: mspd view out of range");
  }
  const Camera& cam = cameras[options.mspd_view];
  const auto match = match_estimates(poses, gt);

  MetricReport report;
  report.objects.resize(gt.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t g = 0; g < gt.size(); ++g) {
    const auto& obj = gt.objects[g];
    const auto& model = find_model(library, obj.class_id);
    ObjectEval& ev = report.objects[g];
    ev.gt_id = obj.object_id;
    ev.class_id = obj.class_id;
    ev.estimate = match[g];
    ev.diameter = model.diameter;
    if (match[g] < 0) {
      ev.translation_error = ev.add = ev.add_s = ev.mssd = ev.mspd = kInf;
      continue;
    }
    const Pose& p = poses[match[g]];
    ev.translation_error = (p.translation - obj.translation).norm();
    ev.add = add(p.rotation, p.translation, obj.rotation, obj.translation, model.cloud);
    ev.add_s = add_s(p.rotation, p.translation, obj.rotation, obj.translation, model.cloud);
    ev.mssd = mssd(p.rotation, p.translation, obj.rotation, obj.translation, model.mesh.vertices, model.symmetries);
    ev.mspd = mspd(p.rotation, p.translation, obj.rotation, obj.translation, model.mesh.vertices, model.symmetries, cam);
  }
  report.false_positives = static_cast<int>(poses.size()) -
                           static_cast<int>(std::count_if(match.begin(), match.end(), [](int m) { return m >= 0; }));

  std::vector<double> adds, addss;
  for (const auto& ev : report.objects) {
    adds.push_back(ev.add);
    addss.push_back(ev.add_s);
  }
  report.add_auc = auc(adds);
  report.add_s_auc = auc(addss);

  const double px_scale = cam.intrinsics.width / 640.0;
  std::vector<double> px_thresholds;
  for (int k = 1; k <= 10; ++k) px_thresholds.push_back(5.0 * k * px_scale);
  const auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };

  // Per-object MSSD recall uses thresholds relative to that object's
  // diameter, so recall is accumulated per threshold rather than via
  // recall_curve on raw errors.
  std::map<int, std::vector<const ObjectEval*>> by_class;
  for (const auto& ev : report.objects) by_class[ev.class_id].push_back(&ev);
  std::vector<double> all_mssd, all_mspd, all_mm;
  for (const auto& [cls, evs] : by_class) {
    ClassSummary cs;
    cs.class_id = cls;
    cs.count = static_cast<int>(evs.size());
    std::vector<double> rel, px, mm;
    for (const auto* ev : evs) {
      rel.push_back(ev->mssd / ev->diameter);
      px.push_back(ev->mspd);
      mm.push_back(ev->mssd);
    }
    cs.mssd_recall = mean(recall_curve(rel, diameter_fractions()));
    cs.mspd_recall = mean(recall_curve(px, px_thresholds));
    if (options.millimeter_mssd) cs.mssd_mm_recall = mean(recall_curve(mm, millimeter_thresholds()));
    all_mssd.insert(all_mssd.end(), rel.begin(), rel.end());
    all_mspd.insert(all_mspd.end(), px.begin(), px.end());
    all_mm.insert(all_mm.end(), mm.begin(), mm.end());
    report.classes.push_back(cs);
  }
  report.ap_mssd = mean(recall_curve(all_mssd, diameter_fractions()));
  report.ap_mspd = mean(recall_curve(all_mspd, px_thresholds));
  if (options.millimeter_mssd) report.ap_mssd_mm = mean(recall_curve(all_mm, millimeter_thresholds()));
  report.ap = 0.5 * (report.ap_mssd + report.ap_mspd);
  return report;
}

void write_eval_csv(std::ostream& out, const MetricReport& report) {
  out << "gt_id,class_id,estimate,translation_error,add,add_s,mssd,mspd\n";
  out.precision(9);
  for (const auto& ev : report.objects) {
    out << ev.gt_id << ',' << ev.class_id << ',' << ev.estimate << ',' << ev.translation_error << ',' << ev.add << ','
        << ev.add_s << ',' << ev.mssd << ',' << ev.mspd << '\n';
  }
}

nlohmann::json report_to_json(const MetricReport& report, const EvalOptions& options) {
  using nlohmann::json;
  json j;
  j["objects"] = report.objects.size();
  j["false_positives"] = report.false_positives;
  j["add_auc"] = report.add_auc;
  j["add_s_auc"] = report.add_s_auc;
  j["ap_mssd"] = report.ap_mssd;
  j["ap_mspd"] = report.ap_mspd;
  j["ap"] = report.ap;
  if (options.millimeter_mssd) j["ap_mssd_mm"] = report.ap_mssd_mm;
  j["classes"] = json::array();
  for (const auto& c : report.classes) {
    json row = {{"class_id", c.class_id}, {"count", c.count}, {"mssd", c.mssd_recall}, {"mspd", c.mspd_recall}};
    if (options.millimeter_mssd) row["mssd_mm"] = c.mssd_mm_recall;
    j["classes"].push_back(row);
  }
  return j;
}

nlohmann::json poses_to_json(const PoseSet& poses) {
  using nlohmann::json;
  json arr = json::array();
  for (const auto& p : poses) {
    json r = json::array();
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) r.push_back(p.rotation(a, b));
    arr.push_back({{"object_id", p.object_id},
                   {"class_id", p.class_id},
                   {"R", r},
                   {"t", {p.translation.x(), p.translation.y(), p.translation.z()}},
                   {"confidence", p.confidence},
                   {"support", p.support},
                   {"refined", p.refined}});
  }
  return {{"poses", arr}};
}

PoseSet poses_from_json(const nlohmann::json& j) {
  PoseSet out;
  try {
    for (const auto& e : j.at("poses")) {
      Pose p;
      p.object_id = e.at("object_id").get<int>();
      p.class_id = e.at("class_id").get<int>();
      const auto& r = e.at("R");
      if (r.size() != 9) throw DataError("pose: R must have 9 entries");
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) p.rotation(a, b) = r.at(a * 3 + b).get<double>();
      const auto& t = e.at("t");
      if (t.size() != 3) throw DataError("pose: t must have 3 entries");
      p.translation = Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>());
      p.confidence = e.value("confidence", 0.0);
      p.support = e.value("support", 0);
      p.refined = e.value("refined", false);
      out.push_back(p);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("pose file: ") + e.what());
  }
  return out;
}

void write_poses_csv(std::ostream& out, const PoseSet& poses) {
  out << "object_id,class_id,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz,confidence,support,refined\n";
  out.precision(17);
  for (const auto& p : poses) {
    out << p.object_id << ',' << p.class_id;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) out << ',' << p.rotation(a, b);
    out << ',' << p.translation.x() << ',' << p.translation.y() << ',' << p.translation.z() << ',' << p.confidence
        << ',' << p.support << ',' << (p.refined ? 1 : 0) << '\n';
  }
}

PoseSet gt_as_poses(const SceneGroundTruth& gt) {
  PoseSet out;
  for (const auto& o : gt.objects) {
    Pose p;
    p.object_id = o.object_id;
    p.class_id = o.class_id;
    p.rotation = o.rotation;
    p.translation = o.translation;
    p.confidence = 1.0;
    out.push_back(p);
  }
  return out;
}

}  // namespace sparsepose
