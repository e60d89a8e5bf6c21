#include "sparsepose/voxel_grid.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <unordered_set>

namespace sparsepose {

SparseVoxelGrid::SparseVoxelGrid(double resolution, Vec3 origin, std::vector<VoxelIndex> indices,
                                 Eigen::MatrixXd features)
    : resolution_(resolution), origin_(std::move(origin)), indices_(std::move(indices)), features_(std::move(features)) {
  if (!(resolution_ > 0.0)) throw DataError("voxel grid: resolution must be positive");
  if (features_.rows() != static_cast<Eigen::Index>(indices_.size())) {
    throw DataError("voxel grid: feature rows must match index count");
  }
  lookup_.reserve(indices_.size());
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    if (i > 0 && !(indices_[i - 1] < indices_[i])) throw DataError("voxel grid: indices must be unique and sorted");
    lookup_.emplace(indices_[i], static_cast<int>(i));
  }
}

std::optional<int> SparseVoxelGrid::find(const VoxelIndex& v) const {
  const auto it = lookup_.find(v);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::vector<Vec3> SparseVoxelGrid::centers() const {
  std::vector<Vec3> out(indices_.size());
  for (int i = 0; i < size(); ++i) out[i] = center(i);
  return out;
}

SparseVoxelGrid voxelize(const Eigen::MatrixXd& points, double resolution, const Vec3& origin) {
  const Eigen::Index extra = points.cols() - 3;
  if (extra != 0 && extra != 1) throw DataError("voxelize: points must have 3 or 4 columns");
  const int channels = 4 + static_cast<int>(extra);

  struct Acc {
    Vec3 offset = Vec3::Zero();
    double extra = 0.0;
    int count = 0;
  };
  std::map<VoxelIndex, Acc> acc;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const Vec3 p = points.row(i).head<3>().transpose();
    const VoxelIndex v = index_of(p, origin, resolution);
    auto& a = acc[v];
    a.offset += (p - center_of(v, origin, resolution)) / resolution;
    if (extra) a.extra += points(i, 3);
    ++a.count;
  }
  std::vector<VoxelIndex> indices;
  indices.reserve(acc.size());
  Eigen::MatrixXd features(static_cast<Eigen::Index>(acc.size()), channels);
  Eigen::Index row = 0;
  for (const auto& [v, a] : acc) {
    indices.push_back(v);
    features.row(row).head<3>() = (a.offset / a.count).transpose();
    features(row, 3) = std::log1p(static_cast<double>(a.count));
    if (extra) features(row, 4) = a.extra / a.count;
    ++row;
  }
  return {resolution, origin, std::move(indices), std::move(features)};
}

SparseVoxelGrid voxelize(std::span<const Vec3> points, double resolution, const Vec3& origin) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(points.size()), 3);
  for (std::size_t i = 0; i < points.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
  return voxelize(m, resolution, origin);
}

CoarseGrid coarsen(const SparseVoxelGrid& fine, int factor) {
  if (factor < 2) throw ConfigError("coarsen: factor must be >= 2");
  std::map<VoxelIndex, std::vector<int>> children;
  for (int i = 0; i < fine.size(); ++i) children[floor_div(fine.indices()[i], factor)].push_back(i);

  CoarseGrid out;
  out.factor = factor;
  out.parent.assign(fine.size(), -1);
  std::vector<VoxelIndex> indices;
  Eigen::MatrixXd features(static_cast<Eigen::Index>(children.size()), fine.channels());
  int row = 0;
  for (const auto& [v, rows] : children) {
    indices.push_back(v);
    features.row(row).setZero();
    for (int r : rows) {
      features.row(row) += fine.features().row(r);
      out.parent[r] = row;
    }
    features.row(row) /= static_cast<double>(rows.size());
    ++row;
  }
  out.grid = SparseVoxelGrid(fine.resolution() * factor, fine.origin(), std::move(indices), std::move(features));
  return out;
}

LiftResult lift_and_filter(const SparseVoxelGrid& fine, const SparseVoxelGrid& coarse,
                           std::span<const int> kept_coarse_rows, const Eigen::MatrixXd& coarse_features,
                           int factor) {
  if (coarse_features.rows() != coarse.size()) throw DataError("lift: coarse feature rows mismatch");
  std::vector<char> kept(coarse.size(), 0);
  for (int r : kept_coarse_rows) {
    if (r < 0 || r >= coarse.size()) throw DataError("lift: kept row out of range");
    kept[r] = 1;
  }
  LiftResult out;
  std::vector<VoxelIndex> indices;
  for (int i = 0; i < fine.size(); ++i) {
    const auto parent = coarse.find(floor_div(fine.indices()[i], factor));
    if (!parent) throw DataError("lift: fine voxel has no coarse parent");
    if (!kept[*parent]) continue;
    out.fine_rows.push_back(i);
    out.coarse_rows.push_back(*parent);
    indices.push_back(fine.indices()[i]);
  }
  const int n = static_cast<int>(indices.size());
  const int c = fine.channels();
  Eigen::MatrixXd features(n, c + coarse_features.cols());
  for (int k = 0; k < n; ++k) {
    features.row(k).head(c) = fine.features().row(out.fine_rows[k]);
    features.row(k).tail(coarse_features.cols()) = coarse_features.row(out.coarse_rows[k]);
  }
  out.grid = SparseVoxelGrid(fine.resolution(), fine.origin(), std::move(indices), std::move(features));
  return out;
}

std::vector<Window> partition_windows(std::span<const VoxelIndex> indices, int window) {
  if (window < 1) throw ConfigError("partition_windows: window must be >= 1");
  std::map<VoxelIndex, std::vector<int>> groups;
  for (std::size_t i = 0; i < indices.size(); ++i) groups[floor_div(indices[i], window)].push_back(static_cast<int>(i));
  std::vector<Window> out;
  out.reserve(groups.size());
  for (auto& [id, rows] : groups) out.push_back({id, std::move(rows)});
  return out;
}

std::vector<OccupancyRow> occupancy_stats(std::span<const Vec3> points, const Aabb& workspace,
                                          std::span<const double> thetas) {
  std::vector<OccupancyRow> out;
  const Vec3 extent = workspace.extent();
  for (double theta : thetas) {
    if (!(theta > 0.0)) throw ConfigError("occupancy_stats: theta must be positive");
    std::unordered_set<VoxelIndex, VoxelIndexHash> occupied;
    for (const auto& p : points) {
      if (workspace.contains(p)) occupied.insert(index_of(p, workspace.min, theta));
    }
    OccupancyRow row;
    row.theta = theta;
    row.sparse = occupied.size();
    row.dense = 1;
    for (int a = 0; a < 3; ++a) {
      // Guard against 0.3 / 0.001 = 299.99999999999994 style rounding.
      const double cells = extent[a] / theta;
      const double nearest = std::round(cells);
      row.dense *= static_cast<std::size_t>(std::abs(cells - nearest) < 1e-9 ? nearest : std::ceil(cells));
    }
    row.ratio = row.dense ? static_cast<double>(row.sparse) / static_cast<double>(row.dense) : 0.0;
    out.push_back(row);
  }
  return out;
}

void write_occupancy_csv(std::ostream& out, std::span<const OccupancyRow> rows) {
  out << "theta_mm,sparse,dense,ratio\n";
  for (const auto& r : rows) out << r.theta * 1000.0 << ',' << r.sparse << ',' << r.dense << ',' << r.ratio << '\n';
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DataError("loglog_slope: need >= 2 paired samples");
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace sparsepose
