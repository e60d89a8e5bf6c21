#include "sparsepose/fusion.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sparsepose {

FusedPointCloud fuse_views(std::span<const DepthImage> depths, std::span<const Camera> cameras,
                           const Aabb& workspace, const DepthRange& range, Exec exec) {
  if (depths.size() != cameras.size() || depths.empty()) {
    throw DataError("fuse_views: need one camera per depth image and at least one view");
  }
  const int n = static_cast<int>(depths.size());
  std::vector<std::vector<Vec3>> per_view(n);
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (int i = 0; i < n; ++i) {
    auto pts = backproject(depths[i], cameras[i], range);
    std::erase_if(pts, [&](const Vec3& p) { return !workspace.contains(p); });
    per_view[i] = std::move(pts);
  }
  FusedPointCloud cloud;
  std::size_t total = 0;
  for (const auto& v : per_view) total += v.size();
  cloud.points.reserve(total);
  cloud.source_view.reserve(total);
  for (int i = 0; i < n; ++i) {
    cloud.points.insert(cloud.points.end(), per_view[i].begin(), per_view[i].end());
    cloud.source_view.insert(cloud.source_view.end(), per_view[i].size(), i);
  }
  return cloud;
}

static_assert(std::endian::native == std::endian::little, "PLY writer assumes a little-endian host");

void write_ply(const std::filesystem::path& path, std::span<const Vec3> points, std::span<const double> scalar,
               const std::string& scalar_name, const std::string& comment) {
  if (!scalar.empty() && scalar.size() != points.size()) throw DataError("write_ply: scalar size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write ply: " + path.string());
  out << "ply\nformat binary_little_endian 1.0\n";
  if (!comment.empty()) out << "comment " << comment << "\n";
  out << "element vertex " << points.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n";
  if (!scalar.empty()) out << "property double " << scalar_name << "\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    out.write(reinterpret_cast<const char*>(points[i].data()), 3 * sizeof(double));
    if (!scalar.empty()) out.write(reinterpret_cast<const char*>(&scalar[i]), sizeof(double));
  }
  if (!out) throw DataError("ply write failed: " + path.string());
}

std::vector<Vec3> read_ply_points(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open ply: " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw DataError("not a ply file: " + path.string());
  std::size_t count = 0;
  std::vector<std::string> props;
  bool binary = false;
  while (std::getline(in, line)) {
    if (line == "end_header") break;
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "format") {
      std::string fmt;
      ss >> fmt;
      binary = fmt == "binary_little_endian";
    } else if (tok == "element") {
      std::string name;
      ss >> name >> count;
      if (name != "vertex") throw DataError("ply: only vertex elements are supported");
    } else if (tok == "property") {
      std::string type, name;
      ss >> type >> name;
      if (type != "double") throw DataError("ply: only double properties are supported");
      props.push_back(name);
    }
  }
  if (!binary || props.size() < 3 || props[0] != "x" || props[1] != "y" || props[2] != "z") {
    throw DataError("ply: expected binary_little_endian with leading double x y z");
  }
  std::vector<Vec3> pts(count);
  std::vector<double> row(props.size());
  for (std::size_t i = 0; i < count; ++i) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
    if (!in) throw DataError("ply: truncated vertex data in " + path.string());
    pts[i] = Vec3(row[0], row[1], row[2]);
  }
  return pts;
}

}  // namespace sparsepose
