#pragma once

#include "sparsepose/camera.hpp"
#include "sparsepose/fusion.hpp"

#include <filesystem>
#include <optional>
#include <unordered_map>
#include <vector>

namespace sparsepose {

struct TsdfConfig {
  double voxel_size = 0.002;   // meters
  int voxels_per_side = 16;    // L
  double truncation = 0.016;   // meters, default 8 * voxel_size
  double weight_cap = 64.0;
  Vec3 origin = Vec3::Zero();  // shared block/voxel lattice origin

  static TsdfConfig from_voxel_size(double voxel_size, int voxels_per_side = 16, double trunc_factor = 8.0);
  double block_size() const { return voxels_per_side * voxel_size; }
  void validate() const;
};

struct TsdfVoxel {
  double sdf = 0.0;     // normalized, in [-1, 1]
  double weight = 0.0;
};

/// Blocks of L^3 voxels keyed by packed block index. Voxel (lx, ly, lz) is
/// stored at lx + L * (ly + L * lz).
class SparseTsdf {
 public:
  explicit SparseTsdf(TsdfConfig cfg);

  const TsdfConfig& config() const { return cfg_; }
  std::size_t block_count() const { return blocks_.size(); }
  std::size_t voxel_capacity() const;

  /// Adds blocks touched by the cloud plus their 26-neighbourhood. Returns the
  /// activated set (sorted); existing blocks keep their payload.
  std::vector<VoxelIndex> activate(const FusedPointCloud& cloud);
  void activate_block(const VoxelIndex& b);
  bool has_block(const VoxelIndex& b) const { return blocks_.count(pack_key(b)) != 0; }

  /// Weighted-average update of every active voxel against one depth view.
  void integrate_view(const DepthImage& depth, const Camera& cam, const DepthRange& range = {},
                      Exec exec = Exec::Parallel);

  /// Lookup by global voxel index (block * L + local).
  std::optional<TsdfVoxel> voxel(const VoxelIndex& global) const;
  Vec3 voxel_center(const VoxelIndex& global) const;

  /// Sorted block indices.
  std::vector<VoxelIndex> blocks() const;
  const std::vector<TsdfVoxel>& block_voxels(const VoxelIndex& b) const;

  /// Rows (x, y, z, sdf) for voxels with weight > 0 and |sdf| < 1, sorted by
  /// global voxel index.
  Eigen::MatrixX4d extract_pbar() const;
  std::size_t count_band_voxels() const;

  void save(const std::filesystem::path& path) const;
  static SparseTsdf load(const std::filesystem::path& path);

 private:
  TsdfConfig cfg_;
  std::unordered_map<std::uint64_t, std::vector<TsdfVoxel>> blocks_;
};

/// Block indices whose extent contains at least one point, before dilation.
std::vector<VoxelIndex> surface_blocks(const FusedPointCloud& cloud, const TsdfConfig& cfg);

/// The per-observation update shared by the sparse and dense integrators:
/// returns false when the observation is skipped.
bool tsdf_update(TsdfVoxel& voxel, double observed_depth, double voxel_depth, const TsdfConfig& cfg);

}  // namespace sparsepose
