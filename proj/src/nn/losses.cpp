#include "sparsepose/nn/losses.hpp"

#include "sparsepose/heatmap.hpp"
#include "sparsepose/nn/ops.hpp"
#include "sparsepose/pose_voting.hpp"

namespace sparsepose::nn {

namespace {

Tensor scalar_loss(const Tensor& input, const LossResult& r) {
  Matrix v(1, 1);
  v(0, 0) = r.value;
  Matrix grad = r.grad;
  return Tensor::make(std::move(v), {input}, [grad = std::move(grad)](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(grad * n.grad(0, 0));
  });
}

void require_column(const Tensor& t, const char* op) {
  if (t.cols() != 1) throw DataError(std::string(op) + ": prediction must be a column vector");
}

}  // namespace

Tensor gaussian_focal_loss(const Tensor& pred, const Eigen::VectorXd& target, double alpha, double gamma) {
  require_column(pred, "gaussian_focal_loss");
  return scalar_loss(pred, sparsepose::gaussian_focal_loss(pred.value().col(0), target, alpha, gamma));
}

Tensor focal_loss(const Tensor& pred, const Eigen::VectorXi& target, double gamma, double alpha) {
  require_column(pred, "focal_loss");
  return scalar_loss(pred, sparsepose::focal_loss(pred.value().col(0), target, gamma, alpha));
}

Tensor weighted_cross_entropy(const Tensor& logits, const Eigen::VectorXi& labels, const Eigen::VectorXd& weights) {
  return scalar_loss(logits, sparsepose::weighted_cross_entropy(logits.value(), labels, weights));
}

Tensor smooth_l1(const Tensor& pred, const Eigen::MatrixXd& target, const Eigen::VectorXi& valid, double delta) {
  return scalar_loss(pred, sparsepose::smooth_l1(pred.value(), target, valid, delta));
}

Tensor rot6d_to_matrix(const Tensor& r6) {
  if (r6.cols() != 6) throw DataError("rot6d_to_matrix: input must have 6 columns");
  const Eigen::Index n = r6.rows();
  Matrix out(n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Rot6d r = r6.value().row(i).transpose();
    const Mat3 m = sparsepose::rot6d_to_matrix(r);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) out(i, a * 3 + b) = m(a, b);
  }
  return Tensor::make(std::move(out), {r6}, [](Node& n) {
    const Matrix& in = n.parents[0]->value;
    Matrix g(in.rows(), 6);
    for (Eigen::Index i = 0; i < in.rows(); ++i) {
      Mat3 gm;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) gm(a, b) = n.grad(i, a * 3 + b);
      g.row(i) = rot6d_backward(in.row(i).transpose(), gm).transpose();
    }
    n.parents[0]->accumulate(g);
  });
}

Tensor chamfer_rotation_loss(const Tensor& rotations, const std::vector<Mat3>& gt_rotations,
                             const std::vector<const std::vector<Vec3>*>& models, const Eigen::VectorXi& valid,
                             Exec exec) {
  const Eigen::Index n = rotations.rows();
  if (rotations.cols() != 9 || static_cast<Eigen::Index>(gt_rotations.size()) != n ||
      static_cast<Eigen::Index>(models.size()) != n || valid.size() != n) {
    throw DataError("chamfer_rotation_loss: shape mismatch");
  }
  const double count = std::max(1, valid.sum());
  Matrix grad = Matrix::Zero(n, 9);
  Eigen::VectorXd values = Eigen::VectorXd::Zero(n);
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!valid[i]) continue;
    Mat3 r;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) r(a, b) = rotations.value()(i, a * 3 + b);
    const auto res = chamfer_rotation(r, gt_rotations[i], *models[i]);
    values[i] = res.value;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) grad(i, a * 3 + b) = res.grad(a, b) / count;
  }
  LossResult lr;
  lr.value = values.sum() / count;
  lr.grad = std::move(grad);
  return scalar_loss(rotations, lr);
}

Tensor multitask_loss(const Tensor& roi, const Tensor& obj, const Tensor& cls, const Tensor& trans, const Tensor& rot,
                      const LossWeights& weights) {
  const auto w = weights.as_vector();
  return weighted_sum({roi, obj, cls, trans, rot}, w);
}

}  // namespace sparsepose::nn
