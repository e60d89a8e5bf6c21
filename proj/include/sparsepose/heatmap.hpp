#pragma once

#include "sparsepose/ground_truth.hpp"
#include "sparsepose/kdtree.hpp"
#include "sparsepose/voxel_grid.hpp"

#include <span>
#include <vector>

namespace sparsepose {

struct HeatmapParams {
  double sigma_c = 6.0;   // center spread, coarse-voxel units
  double sigma_b = 4.0;   // boundary spread, coarse-voxel units
  double alpha = 4.0;     // Gaussian focal negative exponent
  double gamma = 2.0;     // Gaussian focal focusing exponent
  double beta = 10.0;     // soft attention slope
  double epsilon = 0.3;   // soft attention shift
  double kappa = 0.5;     // keep threshold on attention
  bool reweight_features = false;

  void validate() const;
};

struct LossResult {
  double value = 0.0;
  Eigen::MatrixXd grad;  // same shape as the prediction
};

/// Distance-weighted RoI target per coarse voxel; distances in units of the
/// grid resolution.
Eigen::VectorXd roi_target(const SparseVoxelGrid& coarse, const SceneGroundTruth& gt, const HeatmapParams& params);

/// Closed form of the RoI target for given min-distances (already in voxel units).
double roi_score(double center_dist, double boundary_dist, double sigma_c, double sigma_b);

constexpr double kProbClamp = 1e-6;

/// Mean Gaussian focal loss; predictions clamped to [1e-6, 1 - 1e-6].
LossResult gaussian_focal_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& target, double alpha, double gamma);

struct SoftSuppression {
  Eigen::VectorXd attention;
  std::vector<int> kept;  // ascending rows with attention > kappa
};

SoftSuppression soft_suppress(const Eigen::VectorXd& scores, double beta, double epsilon, double kappa);

/// Object owning each voxel (most model points inside; ties to the lower
/// object), -1 for background.
std::vector<int> voxel_object_assignment(const SparseVoxelGrid& grid, const SceneGroundTruth& gt);

Eigen::VectorXi objectness_target(const SparseVoxelGrid& grid, const SceneGroundTruth& gt);

/// Binary focal loss summed over voxels and divided by max(1, #positives).
LossResult focal_loss(const Eigen::VectorXd& pred, const Eigen::VectorXi& target, double gamma = 2.0,
                      double alpha = 0.25);

/// K = clamp(ceil(r N), k_min, min(k_max, N)); highest scores first, ties to the
/// lower row (rows follow lexicographic voxel order). Returned ascending.
std::vector<int> adaptive_topk(const Eigen::VectorXd& scores, double ratio, int k_min, int k_max);

/// Inverse-frequency weights N / (n_present * n_c); absent classes get 0.
Eigen::VectorXd class_weights(const Eigen::VectorXi& labels, int num_classes);

/// Weighted cross entropy sum_i w_{y_i} CE_i / sum_i w_{y_i}; gradient w.r.t. logits.
LossResult weighted_cross_entropy(const Eigen::MatrixXd& logits, const Eigen::VectorXi& labels,
                                  const Eigen::VectorXd& weights);

/// Objectness-conditioned additive bias for the classifier hidden layer.
Eigen::MatrixXd conditioning_bias(const Eigen::MatrixXd& heat_features, const Eigen::MatrixXd& projection);

}  // namespace sparsepose
