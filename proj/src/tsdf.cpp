#include "sparsepose/tsdf.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

namespace sparsepose {

TsdfConfig TsdfConfig::from_voxel_size(double voxel_size, int voxels_per_side, double trunc_factor) {
  TsdfConfig c;
  c.voxel_size = voxel_size;
  c.voxels_per_side = voxels_per_side;
  c.truncation = trunc_factor * voxel_size;
  c.validate();
  return c;
}

void TsdfConfig::validate() const {
  if (!(voxel_size > 0.0)) throw ConfigError("tsdf: voxel size must be positive");
  if (voxels_per_side < 1) throw ConfigError("tsdf: voxels per side must be >= 1");
  if (!(truncation > 0.0)) throw ConfigError("tsdf: truncation must be positive");
  if (!(weight_cap >= 1.0)) throw ConfigError("tsdf: weight cap must be >= 1");
  // One-block dilation only covers the truncation band if it is narrower than a block.
  if (truncation >= block_size()) throw ConfigError("tsdf: truncation must be smaller than the block size");
}

SparseTsdf::SparseTsdf(TsdfConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::size_t SparseTsdf::voxel_capacity() const {
  const std::size_t l = cfg_.voxels_per_side;
  return blocks_.size() * l * l * l;
}

std::vector<VoxelIndex> surface_blocks(const FusedPointCloud& cloud, const TsdfConfig& cfg) {
  std::set<VoxelIndex> out;
  const double b = cfg.block_size();
  for (const auto& p : cloud.points) out.insert(index_of(p, cfg.origin, b));
  return {out.begin(), out.end()};
}

void SparseTsdf::activate_block(const VoxelIndex& b) {
  const std::size_t l = cfg_.voxels_per_side;
  blocks_.try_emplace(pack_key(b), l * l * l);
}

std::vector<VoxelIndex> SparseTsdf::activate(const FusedPointCloud& cloud) {
  std::set<VoxelIndex> active;
  for (const auto& s : surface_blocks(cloud, cfg_)) {
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) active.insert(s + VoxelIndex{dx, dy, dz});
  }
  for (const auto& b : active) activate_block(b);
  return {active.begin(), active.end()};
}

bool tsdf_update(TsdfVoxel& voxel, double observed_depth, double voxel_depth, const TsdfConfig& cfg) {
  const double s = observed_depth - voxel_depth;
  if (s < -cfg.truncation) return false;
  const double phi = std::clamp(s / cfg.truncation, -1.0, 1.0);
  voxel.sdf = (voxel.weight * voxel.sdf + phi) / (voxel.weight + 1.0);
  voxel.weight = std::min(voxel.weight + 1.0, cfg.weight_cap);
  return true;
}

void SparseTsdf::integrate_view(const DepthImage& depth, const Camera& cam, const DepthRange& range, Exec exec) {
  const auto& intr = cam.intrinsics;
  if (depth.width() != intr.width || depth.height() != intr.height) {
    throw DataError("integrate_view: depth image size does not match intrinsics");
  }
  const int l = cfg_.voxels_per_side;
  std::vector<std::pair<VoxelIndex, std::vector<TsdfVoxel>*>> work;
  work.reserve(blocks_.size());
  for (auto& [key, voxels] : blocks_) work.emplace_back(unpack_key(key), &voxels);

  const Mat3 rot_t = cam.extrinsics.rotation.transpose();
  const Vec3 trans = cam.extrinsics.translation;
  const int n = static_cast<int>(work.size());
  // Blocks are disjoint, so each iteration owns its payload exclusively.
#pragma omp parallel for schedule(dynamic, 4) if (exec == Exec::Parallel)
  for (int i = 0; i < n; ++i) {
    const VoxelIndex base{work[i].first.x * l, work[i].first.y * l, work[i].first.z * l};
    auto& voxels = *work[i].second;
    for (int lz = 0; lz < l; ++lz) {
      for (int ly = 0; ly < l; ++ly) {
        for (int lx = 0; lx < l; ++lx) {
          const Vec3 center = center_of(base + VoxelIndex{lx, ly, lz}, cfg_.origin, cfg_.voxel_size);
          const Vec3 pc = rot_t * (center - trans);
          if (pc.z() <= 0.0) continue;
          const Vec2 px(intr.fx * pc.x() / pc.z() + intr.cx, intr.fy * pc.y() / pc.z() + intr.cy);
          int u = 0;
          int v = 0;
          if (!nearest_pixel(px, intr, u, v)) continue;
          const double d = depth.at(u, v);
          if (!range.contains(d)) continue;
          tsdf_update(voxels[lx + l * (ly + l * lz)], d, pc.z(), cfg_);
        }
      }
    }
  }
}

std::optional<TsdfVoxel> SparseTsdf::voxel(const VoxelIndex& g) const {
  const int l = cfg_.voxels_per_side;
  const VoxelIndex b = floor_div(g, l);
  const auto it = blocks_.find(pack_key(b));
  if (it == blocks_.end()) return std::nullopt;
  const int lx = g.x - b.x * l;
  const int ly = g.y - b.y * l;
  const int lz = g.z - b.z * l;
  return it->second[lx + l * (ly + l * lz)];
}

Vec3 SparseTsdf::voxel_center(const VoxelIndex& g) const { return center_of(g, cfg_.origin, cfg_.voxel_size); }

std::vector<VoxelIndex> SparseTsdf::blocks() const {
  std::vector<VoxelIndex> out;
  out.reserve(blocks_.size());
  for (const auto& kv : blocks_) out.push_back(unpack_key(kv.first));
  std::sort(out.begin(), out.end());
  return out;
}

const std::vector<TsdfVoxel>& SparseTsdf::block_voxels(const VoxelIndex& b) const {
  const auto it = blocks_.find(pack_key(b));
  if (it == blocks_.end()) throw DataError("tsdf: block not active");
  return it->second;
}

namespace {

bool in_band(const TsdfVoxel& v) { return v.weight > 0.0 && std::abs(v.sdf) < 1.0; }

}  // namespace

std::size_t SparseTsdf::count_band_voxels() const {
  std::size_t n = 0;
  for (const auto& kv : blocks_)
    for (const auto& v : kv.second) n += in_band(v) ? 1 : 0;
  return n;
}

Eigen::MatrixX4d SparseTsdf::extract_pbar() const {
  const int l = cfg_.voxels_per_side;
  std::vector<std::pair<VoxelIndex, double>> rows;
  for (const auto& [key, voxels] : blocks_) {
    const VoxelIndex b = unpack_key(key);
    for (int lz = 0; lz < l; ++lz)
      for (int ly = 0; ly < l; ++ly)
        for (int lx = 0; lx < l; ++lx) {
          const auto& v = voxels[lx + l * (ly + l * lz)];
          if (in_band(v)) rows.emplace_back(VoxelIndex{b.x * l + lx, b.y * l + ly, b.z * l + lz}, v.sdf);
        }
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  Eigen::MatrixX4d out(static_cast<Eigen::Index>(rows.size()), 4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Vec3 c = voxel_center(rows[i].first);
    out.row(static_cast<Eigen::Index>(i)) << c.x(), c.y(), c.z(), rows[i].second;
  }
  return out;
}

namespace {

constexpr char kMagic[8] = {'S', 'P', 'T', 'S', 'D', 'F', '0', '1'};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("tsdf dump: truncated file");
  return v;
}

}  // namespace

void SparseTsdf::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write tsdf dump: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<double>(out, cfg_.block_size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg_.voxels_per_side));
  put<double>(out, cfg_.voxel_size);
  put<double>(out, cfg_.truncation);
  put<double>(out, cfg_.weight_cap);
  for (int i = 0; i < 3; ++i) put<double>(out, cfg_.origin[i]);
  put<std::uint64_t>(out, blocks_.size());
  for (const auto& b : blocks()) {
    put<std::int32_t>(out, b.x);
    put<std::int32_t>(out, b.y);
    put<std::int32_t>(out, b.z);
    for (const auto& v : block_voxels(b)) {
      put<float>(out, static_cast<float>(v.sdf));
      put<float>(out, static_cast<float>(v.weight));
    }
  }
  if (!out) throw DataError("tsdf dump write failed: " + path.string());
}

SparseTsdf SparseTsdf::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tsdf dump: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw DataError("tsdf dump: bad magic");
  TsdfConfig cfg;
  get<double>(in);  // block size, derived
  cfg.voxels_per_side = static_cast<int>(get<std::uint32_t>(in));
  cfg.voxel_size = get<double>(in);
  cfg.truncation = get<double>(in);
  cfg.weight_cap = get<double>(in);
  for (int i = 0; i < 3; ++i) cfg.origin[i] = get<double>(in);
  SparseTsdf tsdf(cfg);
  const auto count = get<std::uint64_t>(in);
  const std::size_t l3 = static_cast<std::size_t>(cfg.voxels_per_side) * cfg.voxels_per_side * cfg.voxels_per_side;
  for (std::uint64_t i = 0; i < count; ++i) {
    VoxelIndex b;
    b.x = get<std::int32_t>(in);
    b.y = get<std::int32_t>(in);
    b.z = get<std::int32_t>(in);
    std::vector<TsdfVoxel> voxels(l3);
    for (auto& v : voxels) {
      v.sdf = get<float>(in);
      v.weight = get<float>(in);
    }
    tsdf.blocks_.emplace(pack_key(b), std::move(voxels));
  }
  return tsdf;
}

}  // namespace sparsepose
