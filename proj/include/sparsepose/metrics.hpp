#pragma once

#include "sparsepose/camera.hpp"
#include "sparsepose/pose_voting.hpp"
#include "sparsepose/synthetic.hpp"

#include <iosfwd>
#include <span>
#include <vector>

#include "json.hpp"

namespace sparsepose {

/// Mean distance between corresponding model points under the two poses.
double add(const Mat3& r_est, const Vec3& t_est, const Mat3& r_gt, const Vec3& t_gt, std::span<const Vec3> model);
/// Mean over estimated points of the distance to the closest ground-truth point.
double add_s(const Mat3& r_est, const Vec3& t_est, const Mat3& r_gt, const Vec3& t_gt, std::span<const Vec3> model);

/// Area under the accuracy-vs-threshold curve on (0, max_threshold], sampled at
/// `steps` evenly spaced thresholds.
double auc(std::span<const double> errors, double max_threshold = 0.1, int steps = 100);

/// min over symmetries S of max over vertices of |R_est v + t_est - (R_gt S v + t_gt)|.
double mssd(const Mat3& r_est, const Vec3& t_est, const Mat3& r_gt, const Vec3& t_gt, std::span<const Vec3> vertices,
            std::span<const Mat3> symmetries);
/// Same as mssd with distances measured in pixels after projecting through cam.
double mspd(const Mat3& r_est, const Vec3& t_est, const Mat3& r_gt, const Vec3& t_gt, std::span<const Vec3> vertices,
            std::span<const Mat3> symmetries, const Camera& cam);

/// Fraction of errors strictly below each threshold.
std::vector<double> recall_curve(std::span<const double> errors, std::span<const double> thresholds);
std::vector<double> diameter_fractions();  // 0.05 .. 0.5
std::vector<double> millimeter_thresholds();  // 0.005 .. 0.05 m

struct ObjectEval {
  int gt_id = 0;
  int class_id = 0;
  int estimate = -1;  // index into the pose set, -1 = missed
  double translation_error = 0.0;
  double add = 0.0;
  double add_s = 0.0;
  double mssd = 0.0;
  double mspd = 0.0;
  double diameter = 0.0;
};

struct ClassSummary {
  int class_id = 0;
  int count = 0;
  double mssd_recall = 0.0;  // mean recall over diameter fractions
  double mspd_recall = 0.0;  // mean recall over pixel thresholds
  double mssd_mm_recall = 0.0;
};

struct MetricReport {
  std::vector<ObjectEval> objects;
  std::vector<ClassSummary> classes;
  double add_auc = 0.0;
  double add_s_auc = 0.0;
  double ap_mssd = 0.0;
  double ap_mspd = 0.0;
  double ap_mssd_mm = 0.0;
  double ap = 0.0;  // mean of ap_mssd and ap_mspd
  int false_positives = 0;
};

struct EvalOptions {
  bool millimeter_mssd = false;  // also report MSSD recall at absolute 5..50 mm
  int mspd_view = 0;
};

/// Greedy one-to-one matching of estimates to ground truth of the same class by
/// translation distance; missed objects get infinite errors.
std::vector<int> match_estimates(const PoseSet& poses, const SceneGroundTruth& gt);

MetricReport evaluate(const PoseSet& poses, const SceneGroundTruth& gt, const std::vector<ObjectModel>& library,
                      std::span<const Camera> cameras, const EvalOptions& options = {});

void write_eval_csv(std::ostream& out, const MetricReport& report);
nlohmann::json report_to_json(const MetricReport& report, const EvalOptions& options);

nlohmann::json poses_to_json(const PoseSet& poses);
PoseSet poses_from_json(const nlohmann::json& j);
void write_poses_csv(std::ostream& out, const PoseSet& poses);
PoseSet gt_as_poses(const SceneGroundTruth& gt);

}  // namespace sparsepose
