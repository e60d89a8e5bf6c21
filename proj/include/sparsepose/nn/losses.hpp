#pragma once

#include "sparsepose/nn/tensor.hpp"

#include <span>
#include <vector>

namespace sparsepose::nn {

/// Differentiable wrappers around the closed-form losses. Predictions are
/// column vectors (N x 1) unless noted.
Tensor gaussian_focal_loss(const Tensor& pred, const Eigen::VectorXd& target, double alpha, double gamma);
Tensor focal_loss(const Tensor& pred, const Eigen::VectorXi& target, double gamma = 2.0, double alpha = 0.25);
/// logits N x (K + 1); weights per class.
Tensor weighted_cross_entropy(const Tensor& logits, const Eigen::VectorXi& labels, const Eigen::VectorXd& weights);
/// pred, target N x 3.
Tensor smooth_l1(const Tensor& pred, const Eigen::MatrixXd& target, const Eigen::VectorXi& valid, double delta);
/// N x 6 -> N x 9 (row-major rotation entries).
Tensor rot6d_to_matrix(const Tensor& r6);
/// rotations N x 9 row-major; mean symmetric chamfer over valid rows, each row
/// compared against gt_rotations[i] applied to models[i].
Tensor chamfer_rotation_loss(const Tensor& rotations, const std::vector<Mat3>& gt_rotations,
                             const std::vector<const std::vector<Vec3>*>& models, const Eigen::VectorXi& valid,
                             Exec exec = Exec::Parallel);

struct LossWeights {
  double roi = 1.0;
  double obj = 3.0;
  double cls = 2.0;
  double trans = 3.0;
  double rot = 1.0;

  std::vector<double> as_vector() const { return {roi, obj, cls, trans, rot}; }
};

/// lambda-weighted sum of the five task losses (RoI, objectness, class,
/// translation, rotation).
Tensor multitask_loss(const Tensor& roi, const Tensor& obj, const Tensor& cls, const Tensor& trans, const Tensor& rot,
                      const LossWeights& weights = {});

}  // namespace sparsepose::nn
