#include "sparsepose/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace sparsepose {

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<int>(points_.size()));
  }
}

int KdTree::build(int begin, int end) {
  Node node;
  node.begin = begin;
  node.end = end;
  node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  node.hi = -node.lo;
  for (int i = begin; i < end; ++i) {
    node.lo = node.lo.cwiseMin(points_[order_[i]]);
    node.hi = node.hi.cwiseMax(points_[order_[i]]);
  }
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= kLeafSize) return id;

  int axis = 0;
  (node.hi - node.lo).maxCoeff(&axis);
  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
  nodes_[id].axis = axis;
  nodes_[id].split = points_[order_[mid]][axis];
  const int l = build(begin, mid);
  const int r = build(mid, end);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

namespace {

double box_dist_sq(const Vec3& q, const Vec3& lo, const Vec3& hi) {
  const Vec3 d = (lo - q).cwiseMax(q - hi).cwiseMax(Vec3::Zero());
  return d.squaredNorm();
}

}  // namespace

KdTree::Hit KdTree::nearest(const Vec3& q) const {
  Hit best{-1, std::numeric_limits<double>::infinity()};
  if (!nodes_.empty()) nearest_impl(0, q, best);
  return best;
}

void KdTree::nearest_impl(int id, const Vec3& q, Hit& best) const {
  const Node& n = nodes_[id];
  if (box_dist_sq(q, n.lo, n.hi) > best.dist_sq) return;
  if (n.left < 0) {
    for (int i = n.begin; i < n.end; ++i) {
      const int idx = order_[i];
      const double d = (points_[idx] - q).squaredNorm();
      if (d < best.dist_sq || (d == best.dist_sq && idx < best.index)) best = {idx, d};
    }
    return;
  }
  const bool go_left = q[n.axis] < n.split;
  nearest_impl(go_left ? n.left : n.right, q, best);
  nearest_impl(go_left ? n.right : n.left, q, best);
}

std::vector<int> KdTree::radius(const Vec3& q, double r) const {
  std::vector<int> out;
  if (!nodes_.empty()) radius_impl(0, q, r * r, out);
  std::sort(out.begin(), out.end());
  return out;
}

void KdTree::radius_impl(int id, const Vec3& q, double r2, std::vector<int>& out) const {
  const Node& n = nodes_[id];
  if (box_dist_sq(q, n.lo, n.hi) > r2) return;
  if (n.left < 0) {
    for (int i = n.begin; i < n.end; ++i) {
      if ((points_[order_[i]] - q).squaredNorm() <= r2) out.push_back(order_[i]);
    }
    return;
  }
  radius_impl(n.left, q, r2, out);
  radius_impl(n.right, q, r2, out);
}

}  // namespace sparsepose
