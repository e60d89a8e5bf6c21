#pragma once

#include "sparsepose/camera.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace sparsepose {

/// Union of per-view back-projections, cropped to the workspace.
struct FusedPointCloud {
  std::vector<Vec3> points;
  std::vector<int> source_view;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// View-major, row-major point order regardless of thread schedule.
FusedPointCloud fuse_views(std::span<const DepthImage> depths, std::span<const Camera> cameras,
                           const Aabb& workspace, const DepthRange& range = {}, Exec exec = Exec::Parallel);

/// Binary little-endian PLY with float64 x/y/z and optional float64 scalar per vertex.
void write_ply(const std::filesystem::path& path, std::span<const Vec3> points,
               std::span<const double> scalar = {}, const std::string& scalar_name = "value",
               const std::string& comment = {});
std::vector<Vec3> read_ply_points(const std::filesystem::path& path);

}  // namespace sparsepose
