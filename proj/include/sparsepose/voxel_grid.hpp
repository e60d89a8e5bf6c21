#pragma once

#include "sparsepose/common.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace sparsepose {

/// Attributed sparse voxel set: unique indices sorted lexicographically, one
/// feature row per voxel.
class SparseVoxelGrid {
 public:
  SparseVoxelGrid() = default;
  SparseVoxelGrid(double resolution, Vec3 origin, std::vector<VoxelIndex> indices, Eigen::MatrixXd features);

  double resolution() const { return resolution_; }
  const Vec3& origin() const { return origin_; }
  const std::vector<VoxelIndex>& indices() const { return indices_; }
  const Eigen::MatrixXd& features() const { return features_; }
  Eigen::MatrixXd& features() { return features_; }
  int size() const { return static_cast<int>(indices_.size()); }
  int channels() const { return static_cast<int>(features_.cols()); }
  bool empty() const { return indices_.empty(); }

  std::optional<int> find(const VoxelIndex& v) const;
  Vec3 center(int row) const { return center_of(indices_[row], origin_, resolution_); }
  std::vector<Vec3> centers() const;

 private:
  double resolution_ = 1.0;
  Vec3 origin_ = Vec3::Zero();
  std::vector<VoxelIndex> indices_;
  Eigen::MatrixXd features_;
  std::unordered_map<VoxelIndex, int, VoxelIndexHash> lookup_;
};

/// points: rows (x, y, z[, extra]). Feature per voxel: mean offset from the
/// voxel center in units of resolution (3), log(1 + count), and the mean extra
/// channel when present.
SparseVoxelGrid voxelize(const Eigen::MatrixXd& points, double resolution, const Vec3& origin);
SparseVoxelGrid voxelize(std::span<const Vec3> points, double resolution, const Vec3& origin);

struct CoarseGrid {
  SparseVoxelGrid grid;     // features = mean of child features
  std::vector<int> parent;  // fine row -> coarse row
  int factor = 10;
};

CoarseGrid coarsen(const SparseVoxelGrid& fine, int factor = 10);

struct LiftResult {
  SparseVoxelGrid grid;          // features = [fine f, matched coarse f']
  std::vector<int> fine_rows;    // output row -> fine row
  std::vector<int> coarse_rows;  // output row -> coarse row
};

/// Keeps fine voxels whose parent floor(v / factor) is in kept_coarse and
/// appends the parent's feature row.
LiftResult lift_and_filter(const SparseVoxelGrid& fine, const SparseVoxelGrid& coarse,
                           std::span<const int> kept_coarse_rows, const Eigen::MatrixXd& coarse_features,
                           int factor = 10);

struct Window {
  VoxelIndex id;
  std::vector<int> rows;  // ascending
};

/// Non-overlapping cubic windows of `window` voxels per side; windows sorted by id.
std::vector<Window> partition_windows(std::span<const VoxelIndex> indices, int window);

struct OccupancyRow {
  double theta = 0.0;       // meters
  std::size_t sparse = 0;   // occupied voxels
  std::size_t dense = 0;    // prod ceil(extent / theta)
  double ratio = 0.0;
};

std::vector<OccupancyRow> occupancy_stats(std::span<const Vec3> points, const Aabb& workspace,
                                          std::span<const double> thetas);
void write_occupancy_csv(std::ostream& out, std::span<const OccupancyRow> rows);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

}  // namespace sparsepose
