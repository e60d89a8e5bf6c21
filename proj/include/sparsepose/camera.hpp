#pragma once

#include "sparsepose/common.hpp"

#include <filesystem>
#include "json.hpp"
#include <vector>

namespace sparsepose {

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  /// Throws DataError when focal lengths or principal point are out of range.
  void validate() const;
  Mat3 matrix() const;
};

/// Camera-to-world rigid transform.
struct CameraExtrinsics {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static CameraExtrinsics identity() { return {}; }
  static CameraExtrinsics from_matrix(const Mat4& m);
  Mat4 matrix() const;
  CameraExtrinsics inverse() const;
  CameraExtrinsics compose(const CameraExtrinsics& rhs) const;  // this * rhs
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  void validate() const;
};

struct Camera {
  CameraIntrinsics intrinsics;
  CameraExtrinsics extrinsics;
};

/// Pixels with depth inside [near, far] are valid observations.
struct DepthRange {
  double near = 0.05;
  double far = 5.0;
  bool contains(double d) const { return d > 0.0 && d >= near && d <= far; }
};

/// Row-major depth map in meters; 0 marks an invalid pixel.
class DepthImage {
 public:
  DepthImage() = default;
  DepthImage(int width, int height, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  double at(int u, int v) const { return values_[static_cast<std::size_t>(v) * width_ + u]; }
  double& at(int u, int v) { return values_[static_cast<std::size_t>(v) * width_ + u]; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }
  std::size_t count_valid(const DepthRange& range = {}) const;

  bool operator==(const DepthImage&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

struct Projection {
  Vec2 pixel = Vec2::Zero();
  double depth = 0.0;  // camera-frame z
  bool in_front = false;
};

Vec3 backproject_pixel(double u, double v, double depth, const Camera& cam);

/// One world-frame point per valid pixel, row-major pixel order.
std::vector<Vec3> backproject(const DepthImage& depth, const Camera& cam, const DepthRange& range = {});

Projection project(const Vec3& world, const Camera& cam);

/// Nearest pixel to a projected position, or false when outside the image.
bool nearest_pixel(const Vec2& pixel, const CameraIntrinsics& intr, int& u, int& v);

/// 16-bit grayscale PNG; raw value * scale = meters, raw 0 = invalid.
DepthImage load_depth_png(const std::filesystem::path& path, double scale);
void save_depth_png(const std::filesystem::path& path, const DepthImage& depth, double scale);

nlohmann::json camera_to_json(const Camera& cam, double depth_scale);
Camera camera_from_json(const nlohmann::json& j, double* depth_scale = nullptr);

}  // namespace sparsepose
