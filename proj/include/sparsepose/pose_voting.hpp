#pragma once

#include "sparsepose/ground_truth.hpp"
#include "sparsepose/heatmap.hpp"
#include "sparsepose/kdtree.hpp"
#include "sparsepose/voxel_grid.hpp"

#include <map>
#include <span>
#include <vector>

namespace sparsepose {

using Rot6d = Eigen::Matrix<double, 6, 1>;

/// Per-voxel predictions feeding the clustering stage.
struct VoteSet {
  std::vector<Vec3> centers;   // voxel centers, meters
  std::vector<Vec3> offsets;   // predicted center offsets, meters
  std::vector<Rot6d> rot6d;    // predicted 6D rotations
  std::vector<double> confidence;
  std::vector<int> class_ids;

  std::size_t size() const { return centers.size(); }
  void validate() const;
};

struct Pose {
  int object_id = 0;
  int class_id = 0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double confidence = 0.0;
  int support = 0;
  bool refined = false;
};

using PoseSet = std::vector<Pose>;

struct PoseTargets {
  Eigen::MatrixX3d offsets;     // c_i - voxel center (zero for background)
  std::vector<Mat3> rotations;  // identity for background
  std::vector<int> object;      // owning object or -1
  Eigen::VectorXi valid;        // 1 where an object owns the voxel
};

PoseTargets pose_targets(const SparseVoxelGrid& grid, const SceneGroundTruth& gt);

/// Huber loss on per-coordinate errors, summed over xyz, averaged over valid
/// rows. Gradient w.r.t. pred.
LossResult smooth_l1(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, const Eigen::VectorXi& valid,
                     double delta = 0.01);

class DegenerateRotation : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Gram-Schmidt map; columns of the result are (b1, b2, b1 x b2).
Mat3 rot6d_to_matrix(const Rot6d& r);
/// First two columns of R.
Rot6d matrix_to_rot6d(const Mat3& r);
/// Vector-Jacobian product of rot6d_to_matrix: d loss / d r given d loss / d R.
Rot6d rot6d_backward(const Rot6d& r, const Mat3& grad_r);

/// Deterministic subsample of at most n points (evenly strided).
std::vector<Vec3> subsample(std::span<const Vec3> points, std::size_t n);

/// Symmetric squared chamfer distance between R_pred * O and R_gt * O; the
/// gradient is w.r.t. R_pred.
struct ChamferResult {
  double value = 0.0;
  Mat3 grad = Mat3::Zero();
};
ChamferResult chamfer_rotation(const Mat3& r_pred, const Mat3& r_gt, std::span<const Vec3> model);

/// Density-based clustering; label -1 = noise. Clusters are grown fully in
/// point order so labels depend only on the input order.
std::vector<int> dbscan(std::span<const Vec3> points, double eps, int min_pts);

/// Closest rotation to the arithmetic mean of the inputs (chordal L2 mean).
Mat3 chordal_mean(std::span<const Mat3> rotations);

PoseSet aggregate_votes(const VoteSet& votes, std::span<const int> labels, double top_fraction = 0.5);

struct IcpParams {
  int max_iterations = 30;
  double max_correspondence = 0.008;  // meters; default 4 * voxel size
  double tolerance = 1e-5;            // relative RMSE change
  int min_correspondences = 3;
};

struct IcpTrace {
  std::vector<double> rmse;  // per iteration, before the update
  int iterations = 0;
  bool converged = false;
};

/// Point-to-point ICP per pose against one shared scene cloud. Scene points
/// near the current estimate are matched to their nearest model point;
/// matches farther than max_correspondence are rejected. When `support` is
/// given, pose k only considers the scene points listed in support[k].
PoseSet batched_icp(const PoseSet& poses, const std::map<int, std::vector<Vec3>>& models,
                    std::span<const Vec3> scene, const IcpParams& params, std::vector<IcpTrace>* traces = nullptr,
                    const std::vector<std::vector<int>>* support = nullptr);

/// Least-squares rigid transform mapping src onto dst (Kabsch).
void kabsch(std::span<const Vec3> src, std::span<const Vec3> dst, Mat3& rotation, Vec3& translation);

}  // namespace sparsepose
