#pragma once

#include "sparsepose/common.hpp"

#include <span>
#include <vector>

namespace sparsepose {

/// Static 3-d tree over a point set. Exact nearest / radius queries.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::vector<Vec3> points);

  struct Hit {
    int index = -1;
    double dist_sq = 0.0;
  };

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

  /// Nearest point; ties resolved to the smaller original index.
  Hit nearest(const Vec3& q) const;

  /// Indices of all points with |p - q| <= radius, ascending.
  std::vector<int> radius(const Vec3& q, double radius) const;

 private:
  struct Node {
    int begin, end;      // range into order_
    int left = -1, right = -1;
    int axis = 0;
    double split = 0.0;
    Vec3 lo, hi;
  };

  int build(int begin, int end);
  void nearest_impl(int node, const Vec3& q, Hit& best) const;
  void radius_impl(int node, const Vec3& q, double r2, std::vector<int>& out) const;

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  static constexpr int kLeafSize = 12;
};

}  // namespace sparsepose
