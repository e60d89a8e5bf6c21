#include "sparsepose/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace sparsepose {

void HeatmapParams::validate() const {
  if (!(sigma_c > 0.0) || !(sigma_b > 0.0)) throw ConfigError("heatmap: sigma_c and sigma_b must be positive");
  if (!(kappa > 0.0 && kappa < 1.0)) throw ConfigError("heatmap: kappa must lie in (0, 1)");
  if (!(beta > 0.0)) throw ConfigError("heatmap: beta must be positive");
}

double roi_score(double center_dist, double boundary_dist, double sigma_c, double sigma_b) {
  return 0.5 * (std::exp(-center_dist * center_dist / (sigma_c * sigma_c)) +
                std::exp(-boundary_dist * boundary_dist / (sigma_b * sigma_b)));
}

Eigen::VectorXd roi_target(const SparseVoxelGrid& coarse, const SceneGroundTruth& gt, const HeatmapParams& params) {
  Eigen::VectorXd h = Eigen::VectorXd::Zero(coarse.size());
  if (gt.empty()) return h;
  std::vector<Vec3> boundary;
  for (const auto& cloud : gt.object_clouds) boundary.insert(boundary.end(), cloud.begin(), cloud.end());
  const KdTree tree(std::move(boundary));
  const double unit = coarse.resolution();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < coarse.size(); ++i) {
    const Vec3 p = coarse.center(i);
    double dc = std::numeric_limits<double>::infinity();
    for (const auto& c : gt.centroids) dc = std::min(dc, (p - c).norm());
    const double db = tree.empty() ? std::numeric_limits<double>::infinity() : std::sqrt(tree.nearest(p).dist_sq);
    h[i] = roi_score(dc / unit, db / unit, params.sigma_c, params.sigma_b);
  }
  return h;
}

LossResult gaussian_focal_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& target, double alpha, double gamma) {
  if (pred.size() != target.size()) throw DataError("gaussian_focal_loss: size mismatch");
  LossResult r;
  r.grad = Eigen::VectorXd::Zero(pred.size());
  if (pred.size() == 0) return r;
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const bool clamped = pred[i] < kProbClamp || pred[i] > 1.0 - kProbClamp;
    const double p = std::clamp(pred[i], kProbClamp, 1.0 - kProbClamp);
    const double h = target[i];
    const double neg_w = std::pow(1.0 - h, alpha);
    const double lp = std::log(p);
    const double lq = std::log1p(-p);
    total += -h * std::pow(1.0 - p, gamma) * lp - neg_w * std::pow(p, gamma) * lq;
    if (!clamped) {
      const double d_pos = -h * (-gamma * std::pow(1.0 - p, gamma - 1.0) * lp + std::pow(1.0 - p, gamma) / p);
      const double d_neg = -neg_w * (gamma * std::pow(p, gamma - 1.0) * lq - std::pow(p, gamma) / (1.0 - p));
      r.grad(i) = (d_pos + d_neg) * inv_n;
    }
  }
  r.value = total * inv_n;
  return r;
}

SoftSuppression soft_suppress(const Eigen::VectorXd& scores, double beta, double epsilon, double kappa) {
  SoftSuppression s;
  s.attention.resize(scores.size());
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    s.attention[i] = 1.0 / (1.0 + std::exp(-beta * (scores[i] - epsilon)));
    if (s.attention[i] > kappa) s.kept.push_back(static_cast<int>(i));
  }
  return s;
}

std::vector<int> voxel_object_assignment(const SparseVoxelGrid& grid, const SceneGroundTruth& gt) {
  std::vector<int> owner(grid.size(), -1);
  // counts[row][object]
  std::unordered_map<int, std::vector<int>> counts;
  for (std::size_t o = 0; o < gt.object_clouds.size(); ++o) {
    for (const auto& p : gt.object_clouds[o]) {
      const auto row = grid.find(index_of(p, grid.origin(), grid.resolution()));
      if (!row) continue;
      auto& c = counts[*row];
      if (c.empty()) c.assign(gt.object_clouds.size(), 0);
      ++c[o];
    }
  }
  for (const auto& [row, c] : counts) {
    owner[row] = static_cast<int>(std::max_element(c.begin(), c.end()) - c.begin());
  }
  return owner;
}

Eigen::VectorXi objectness_target(const SparseVoxelGrid& grid, const SceneGroundTruth& gt) {
  const auto owner = voxel_object_assignment(grid, gt);
  Eigen::VectorXi y(grid.size());
  for (int i = 0; i < grid.size(); ++i) y[i] = owner[i] >= 0 ? 1 : 0;
  return y;
}

LossResult focal_loss(const Eigen::VectorXd& pred, const Eigen::VectorXi& target, double gamma, double alpha) {
  if (pred.size() != target.size()) throw DataError("focal_loss: size mismatch");
  LossResult r;
  r.grad = Eigen::VectorXd::Zero(pred.size());
  const double norm = std::max<double>(1.0, target.sum());
  double total = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const bool clamped = pred[i] < kProbClamp || pred[i] > 1.0 - kProbClamp;
    const double p = std::clamp(pred[i], kProbClamp, 1.0 - kProbClamp);
    double d = 0.0;
    if (target[i] == 1) {
      const double lp = std::log(p);
      total += -alpha * std::pow(1.0 - p, gamma) * lp;
      d = -alpha * (-gamma * std::pow(1.0 - p, gamma - 1.0) * lp + std::pow(1.0 - p, gamma) / p);
    } else {
      const double lq = std::log1p(-p);
      total += -(1.0 - alpha) * std::pow(p, gamma) * lq;
      d = -(1.0 - alpha) * (gamma * std::pow(p, gamma - 1.0) * lq - std::pow(p, gamma) / (1.0 - p));
    }
    if (!clamped) r.grad(i) = d / norm;
  }
  r.value = total / norm;
  return r;
}

std::vector<int> adaptive_topk(const Eigen::VectorXd& scores, double ratio, int k_min, int k_max) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("adaptive_topk: ratio must lie in (0, 1]");
  const int n = static_cast<int>(scores.size());
  if (n == 0) return {};
  const int want = static_cast<int>(std::ceil(ratio * n - 1e-12));
  const int k = std::min({std::max(want, k_min), k_max, n});
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  order.resize(std::max(k, 0));
  std::sort(order.begin(), order.end());
  return order;
}

Eigen::VectorXd class_weights(const Eigen::VectorXi& labels, int num_classes) {
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(num_classes);
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw DataError("class_weights: label out of range");
    counts[labels[i]] += 1.0;
  }
  const double present = (counts.array() > 0.0).count();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    if (counts[c] > 0.0) w[c] = static_cast<double>(labels.size()) / (present * counts[c]);
  }
  return w;
}

LossResult weighted_cross_entropy(const Eigen::MatrixXd& logits, const Eigen::VectorXi& labels,
                                  const Eigen::VectorXd& weights) {
  if (logits.rows() != labels.size()) throw DataError("weighted_cross_entropy: label count mismatch");
  if (weights.size() != logits.cols()) throw DataError("weighted_cross_entropy: weight count mismatch");
  LossResult r;
  r.grad = Eigen::MatrixXd::Zero(logits.rows(), logits.cols());
  double wsum = 0.0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) wsum += weights[labels[i]];
  if (wsum <= 0.0) return r;
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
    const double z = e.sum();
    const int y = labels[i];
    const double w = weights[y];
    total += w * (std::log(z) + m - logits(i, y));
    r.grad.row(i) = (w / wsum) * (e / z);
    r.grad(i, y) -= w / wsum;
  }
  r.value = total / wsum;
  return r;
}

Eigen::MatrixXd conditioning_bias(const Eigen::MatrixXd& heat_features, const Eigen::MatrixXd& projection) {
  if (heat_features.cols() != projection.rows()) throw DataError("conditioning_bias: shape mismatch");
  return heat_features * projection;
}

}  // namespace sparsepose
