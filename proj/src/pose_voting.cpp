#include "sparsepose/pose_voting.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <iostream>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace sparsepose {

void VoteSet::validate() const {
  const std::size_t n = centers.size();
  if (offsets.size() != n || rot6d.size() != n || confidence.size() != n || class_ids.size() != n) {
    throw DataError("vote set: inconsistent row counts");
  }
  for (const auto& o : offsets)
    if (!o.allFinite()) throw NumericalError("vote set: non-finite offset");
}

PoseTargets pose_targets(const SparseVoxelGrid& grid, const SceneGroundTruth& gt) {
  PoseTargets t;
  const int n = grid.size();
  t.object = voxel_object_assignment(grid, gt);
  t.offsets = Eigen::MatrixX3d::Zero(n, 3);
  t.rotations.assign(n, Mat3::Identity());
  t.valid = Eigen::VectorXi::Zero(n);
  for (int i = 0; i < n; ++i) {
    const int o = t.object[i];
    if (o < 0) continue;
    t.offsets.row(i) = (gt.centroids[o] - grid.center(i)).transpose();
    t.rotations[i] = gt.objects[o].rotation;
    t.valid[i] = 1;
  }
  return t;
}

LossResult smooth_l1(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, const Eigen::VectorXi& valid,
                     double delta) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() || valid.size() != pred.rows()) {
    throw DataError("smooth_l1: shape mismatch");
  }
  LossResult r;
  r.grad = Eigen::MatrixXd::Zero(pred.rows(), pred.cols());
  const double count = std::max(1, valid.sum());
  double total = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    if (!valid[i]) continue;
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
      const double e = pred(i, c) - target(i, c);
      if (std::abs(e) < delta) {
        total += 0.5 * e * e / delta;
        r.grad(i, c) = e / delta / count;
      } else {
        total += std::abs(e) - 0.5 * delta;
        r.grad(i, c) = (e > 0 ? 1.0 : -1.0) / count;
      }
    }
  }
  r.value = total / count;
  return r;
}

Mat3 rot6d_to_matrix(const Rot6d& r) {
  const Vec3 a1 = r.head<3>();
  const Vec3 a2 = r.tail<3>();
  const double n1 = a1.norm();
  if (!(n1 >= 1e-9)) throw DegenerateRotation("rot6d: first column has near-zero norm");
  const Vec3 b1 = a1 / n1;
  const Vec3 u = a2 - b1.dot(a2) * b1;
  const double n2 = u.norm();
  if (!(n2 >= 1e-9)) throw DegenerateRotation("rot6d: columns are parallel");
  const Vec3 b2 = u / n2;
  Mat3 m;
  m.col(0) = b1;
  m.col(1) = b2;
  m.col(2) = b1.cross(b2);
  return m;
}

Rot6d matrix_to_rot6d(const Mat3& r) {
  Rot6d out;
  out << r.col(0), r.col(1);
  return out;
}

Rot6d rot6d_backward(const Rot6d& r, const Mat3& grad_r) {
  const Vec3 a1 = r.head<3>();
  const Vec3 a2 = r.tail<3>();
  const double n1 = a1.norm();
  const Vec3 b1 = a1 / n1;
  const double proj = b1.dot(a2);
  const Vec3 u = a2 - proj * b1;
  const double n2 = u.norm();
  const Vec3 b2 = u / n2;

  Vec3 g1 = grad_r.col(0);
  Vec3 g2 = grad_r.col(1);
  const Vec3 g3 = grad_r.col(2);
  // b3 = b1 x b2
  g1 += b2.cross(g3);
  g2 += g3.cross(b1);
  // b2 = u / |u|
  const Vec3 gu = (g2 - b2 * b2.dot(g2)) / n2;
  // u = a2 - (b1 . a2) b1
  const Vec3 ga2 = gu - b1 * b1.dot(gu);
  g1 -= proj * gu + a2 * b1.dot(gu);
  // b1 = a1 / |a1|
  const Vec3 ga1 = (g1 - b1 * b1.dot(g1)) / n1;
  Rot6d out;
  out << ga1, ga2;
  return out;
}

std::vector<Vec3> subsample(std::span<const Vec3> points, std::size_t n) {
  if (points.size() <= n) return {points.begin(), points.end()};
  std::vector<Vec3> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = points[i * points.size() / n];
  return out;
}

ChamferResult chamfer_rotation(const Mat3& r_pred, const Mat3& r_gt, std::span<const Vec3> model) {
  const auto n = static_cast<Eigen::Index>(model.size());
  if (n == 0) throw DataError("chamfer_rotation: empty model");
  Eigen::Matrix3Xd o(3, n);
  for (Eigen::Index i = 0; i < n; ++i) o.col(i) = model[i];
  const Eigen::Matrix3Xd a = r_pred * o;
  const Eigen::Matrix3Xd b = r_gt * o;
  const Eigen::RowVectorXd an = a.colwise().squaredNorm();
  const Eigen::RowVectorXd bn = b.colwise().squaredNorm();
  Eigen::MatrixXd d = -2.0 * (a.transpose() * b);
  d.colwise() += an.transpose();
  d.rowwise() += bn;

  ChamferResult res;
  Mat3 g = Mat3::Zero();
  double s1 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index j = 0;
    d.row(i).minCoeff(&j);
    const Vec3 e = a.col(i) - b.col(j);
    s1 += e.squaredNorm();
    g += 2.0 * e * o.col(i).transpose();
  }
  double s2 = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::Index i = 0;
    d.col(j).minCoeff(&i);
    const Vec3 e = a.col(i) - b.col(j);
    s2 += e.squaredNorm();
    g += 2.0 * e * o.col(i).transpose();
  }
  res.value = (s1 + s2) / static_cast<double>(n);
  res.grad = g / static_cast<double>(n);
  return res;
}

std::vector<int> dbscan(std::span<const Vec3> points, double eps, int min_pts) {
  if (!(eps > 0.0) || min_pts < 1) throw ConfigError("dbscan: eps must be > 0 and min_pts >= 1");
  const int n = static_cast<int>(points.size());
  // Cell size eps: every neighbour lies in the 27 surrounding cells.
  std::unordered_map<VoxelIndex, std::vector<int>, VoxelIndexHash> cells;
  const Vec3 origin = Vec3::Zero();
  std::vector<VoxelIndex> cell_of(n);
  for (int i = 0; i < n; ++i) {
    cell_of[i] = index_of(points[i], origin, eps);
    cells[cell_of[i]].push_back(i);
  }
  const double eps2 = eps * eps;
  auto neighbors = [&](int p) {
    std::vector<int> out;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const auto it = cells.find(cell_of[p] + VoxelIndex{dx, dy, dz});
          if (it == cells.end()) continue;
          for (int q : it->second)
            if ((points[q] - points[p]).squaredNorm() <= eps2) out.push_back(q);
        }
    std::sort(out.begin(), out.end());
    return out;
  };

  constexpr int kUnvisited = -2;
  constexpr int kNoise = -1;
  std::vector<int> labels(n, kUnvisited);
  int cluster = 0;
  for (int p = 0; p < n; ++p) {
    if (labels[p] != kUnvisited) continue;
    const auto seed = neighbors(p);
    if (static_cast<int>(seed.size()) < min_pts) {
      labels[p] = kNoise;
      continue;
    }
    labels[p] = cluster;
    std::deque<int> queue(seed.begin(), seed.end());
    while (!queue.empty()) {
      const int q = queue.front();
      queue.pop_front();
      if (labels[q] == kNoise) labels[q] = cluster;
      if (labels[q] != kUnvisited) continue;
      labels[q] = cluster;
      const auto nq = neighbors(q);
      if (static_cast<int>(nq.size()) >= min_pts) queue.insert(queue.end(), nq.begin(), nq.end());
    }
    ++cluster;
  }
  return labels;
}

Mat3 chordal_mean(std::span<const Mat3> rotations) {
  if (rotations.empty()) throw DataError("chordal_mean: no rotations");
  Mat3 m = Mat3::Zero();
  for (const auto& r : rotations) m += r;
  return project_to_so3(m / static_cast<double>(rotations.size()));
}

PoseSet aggregate_votes(const VoteSet& votes, std::span<const int> labels, double top_fraction) {
  votes.validate();
  if (labels.size() != votes.size()) throw DataError("aggregate_votes: label count mismatch");
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) throw ConfigError("aggregate_votes: top fraction must lie in (0, 1]");
  std::map<int, std::vector<int>> clusters;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0) clusters[labels[i]].push_back(static_cast<int>(i));

  PoseSet poses;
  for (auto& [label, rows] : clusters) {
    std::stable_sort(rows.begin(), rows.end(),
                     [&](int a, int b) { return votes.confidence[a] > votes.confidence[b]; });
    const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(top_fraction * rows.size() - 1e-12)));
    Vec3 t = Vec3::Zero();
    std::vector<Mat3> rots;
    std::map<int, double> class_votes;
    double conf = 0.0;
    for (std::size_t k = 0; k < keep; ++k) {
      const int r = rows[k];
      t += votes.centers[r] + votes.offsets[r];
      try {
        rots.push_back(rot6d_to_matrix(votes.rot6d[r]));
      } catch (const DegenerateRotation&) {
        continue;
      }
      class_votes[votes.class_ids[r]] += votes.confidence[r];
      conf += votes.confidence[r];
    }
    if (rots.empty()) {
      std::cerr << "warning: cluster " << label << " has no usable rotation votes, skipped\n";
      continue;
    }
    Pose p;
    p.object_id = label;
    p.translation = t / static_cast<double>(keep);
    p.rotation = chordal_mean(rots);
    p.confidence = conf / static_cast<double>(rots.size());
    p.support = static_cast<int>(rows.size());
    double best = -1.0;
    for (const auto& [cls, w] : class_votes) {
      if (w > best) {
        best = w;
        p.class_id = cls;
      }
    }
    poses.push_back(p);
  }
  return poses;
}

void kabsch(std::span<const Vec3> src, std::span<const Vec3> dst, Mat3& rotation, Vec3& translation) {
  if (src.size() != dst.size() || src.empty()) throw DataError("kabsch: need matching non-empty point sets");
  Vec3 cs = Vec3::Zero();
  Vec3 cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(dst.size());
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) h += (src[i] - cs) * (dst[i] - cd).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  rotation = svd.matrixV() * d * svd.matrixU().transpose();
  translation = cd - rotation * cs;
}

PoseSet batched_icp(const PoseSet& poses, const std::map<int, std::vector<Vec3>>& models,
                    std::span<const Vec3> scene, const IcpParams& params, std::vector<IcpTrace>* traces,
                    const std::vector<std::vector<int>>* support) {
  if (support && support->size() != poses.size()) throw DataError("batched_icp: one support set per pose expected");
  std::map<int, KdTree> model_trees;
  std::map<int, double> model_radius;
  for (const auto& [cls, pts] : models) {
    model_trees.emplace(cls, KdTree(pts));
    double r = 0.0;
    for (const auto& p : pts) r = std::max(r, p.norm());
    model_radius[cls] = r;
  }
  const KdTree scene_tree(std::vector<Vec3>(scene.begin(), scene.end()));
  PoseSet out = poses;
  std::vector<IcpTrace> local(poses.size());
  const int n = static_cast<int>(poses.size());
  const double max_d2 = params.max_correspondence * params.max_correspondence;

#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < n; ++k) {
    Pose& pose = out[k];
    pose.refined = false;
    const auto tree_it = model_trees.find(pose.class_id);
    if (tree_it == model_trees.end() || tree_it->second.empty() || scene_tree.empty()) continue;
    const KdTree& model = tree_it->second;
    const double reach = model_radius[pose.class_id] + 2.0 * params.max_correspondence;
    std::vector<int> candidates;
    if (support) {
      for (int c : (*support)[k]) {
        if (c < 0 || c >= static_cast<int>(scene.size())) continue;
        if ((scene[c] - pose.translation).norm() <= reach) candidates.push_back(c);
      }
    } else {
      candidates = scene_tree.radius(pose.translation, reach);
    }

    Mat3 r = pose.rotation;
    Vec3 t = pose.translation;
    IcpTrace& trace = local[k];
    std::vector<Vec3> src, dst;
    bool ok = true;
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < params.max_iterations; ++it) {
      src.clear();
      dst.clear();
      double err = 0.0;
      for (int c : candidates) {
        const Vec3& s = scene_tree.points()[c];
        const Vec3 local_s = r.transpose() * (s - t);
        const auto hit = model.nearest(local_s);
        if (hit.dist_sq > max_d2) continue;
        src.push_back(model.points()[hit.index]);
        dst.push_back(s);
        err += hit.dist_sq;
      }
      if (static_cast<int>(src.size()) < params.min_correspondences) {
        ok = it > 0;
        break;
      }
      const double rmse = std::sqrt(err / static_cast<double>(src.size()));
      trace.rmse.push_back(rmse);
      if (std::isfinite(prev) && std::abs(prev - rmse) <= params.tolerance * std::max(prev, 1e-12)) {
        trace.converged = true;
        break;
      }
      prev = rmse;
      kabsch(src, dst, r, t);
      trace.iterations = it + 1;
    }
    if (ok) {
      pose.rotation = r;
      pose.translation = t;
      pose.refined = true;
    }
  }
  if (traces) *traces = std::move(local);
  return out;
}

}  // namespace sparsepose
