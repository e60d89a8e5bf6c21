#include "sparsepose/camera.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>


namespace sparsepose {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw DataError("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw DataError("intrinsics: image size must be positive");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw DataError("intrinsics: principal point outside the image");
  }
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 k;
  k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return k;
}

CameraExtrinsics CameraExtrinsics::from_matrix(const Mat4& m) {
  CameraExtrinsics e;
  e.rotation = m.topLeftCorner<3, 3>();
  e.translation = m.topRightCorner<3, 1>();
  return e;
}

Mat4 CameraExtrinsics::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

CameraExtrinsics CameraExtrinsics::inverse() const {
  CameraExtrinsics e;
  e.rotation = rotation.transpose();
  e.translation = -(e.rotation * translation);
  return e;
}

CameraExtrinsics CameraExtrinsics::compose(const CameraExtrinsics& rhs) const {
  CameraExtrinsics e;
  e.rotation = rotation * rhs.rotation;
  e.translation = rotation * rhs.translation + translation;
  return e;
}

void CameraExtrinsics::validate() const {
  if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
      std::abs(rotation.determinant() - 1.0) > 1e-9) {
    throw DataError("extrinsics: rotation is not orthonormal with det +1");
  }
  if (!translation.allFinite()) throw DataError("extrinsics: non-finite translation");
}

DepthImage::DepthImage(int width, int height, double fill)
    : width_(width), height_(height), values_(static_cast<std::size_t>(width) * height, fill) {
  if (width < 0 || height < 0) throw DataError("depth image: negative size");
}

std::size_t DepthImage::count_valid(const DepthRange& range) const {
  std::size_t n = 0;
  for (double d : values_) n += range.contains(d) ? 1 : 0;
  return n;
}

Vec3 backproject_pixel(double u, double v, double depth, const Camera& cam) {
  const auto& k = cam.intrinsics;
  const Vec3 ray((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
  return cam.extrinsics.apply(ray * depth);
}

std::vector<Vec3> backproject(const DepthImage& depth, const Camera& cam, const DepthRange& range) {
  if (depth.width() != cam.intrinsics.width || depth.height() != cam.intrinsics.height) {
    throw DataError("backproject: depth image size does not match intrinsics");
  }
  std::vector<Vec3> out;
  out.reserve(depth.count_valid(range));
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      const double d = depth.at(u, v);
      if (range.contains(d)) out.push_back(backproject_pixel(u, v, d, cam));
    }
  }
  return out;
}

Projection project(const Vec3& world, const Camera& cam) {
  const auto& e = cam.extrinsics;
  const Vec3 pc = e.rotation.transpose() * (world - e.translation);
  Projection p;
  p.depth = pc.z();
  p.in_front = pc.z() > 0.0;
  if (pc.z() != 0.0) {
    const auto& k = cam.intrinsics;
    p.pixel = Vec2(k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy);
  }
  return p;
}

bool nearest_pixel(const Vec2& pixel, const CameraIntrinsics& intr, int& u, int& v) {
  const double ru = std::round(pixel.x());
  const double rv = std::round(pixel.y());
  if (!(ru >= 0.0 && ru < intr.width && rv >= 0.0 && rv < intr.height)) return false;
  u = static_cast<int>(ru);
  v = static_cast<int>(rv);
  return true;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

DepthImage load_depth_png(const std::filesystem::path& path, double scale) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open depth png: " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw DataError("not a png file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng allocation failed");
  }
  std::vector<png_bytep> rows;
  std::vector<std::uint16_t> raw;
  int width = 0;
  int height = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("malformed png: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  const int bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (bit_depth != 16 || color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("depth png must be 16-bit single channel: " + path.string());
  }
  png_set_swap(png);  // network byte order -> host little endian
  raw.resize(static_cast<std::size_t>(width) * height);
  rows.resize(height);
  for (int v = 0; v < height; ++v) rows[v] = reinterpret_cast<png_bytep>(raw.data() + static_cast<std::size_t>(v) * width);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  DepthImage img(width, height);
  for (std::size_t i = 0; i < raw.size(); ++i) img.values()[i] = raw[i] * scale;
  return img;
}

void save_depth_png(const std::filesystem::path& path, const DepthImage& depth, double scale) {
  if (!(scale > 0.0)) throw DataError("depth scale must be positive");
  std::vector<std::uint16_t> raw(depth.values().size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double d = depth.values()[i];
    if (!std::isfinite(d) || d < 0.0) throw DataError("depth png: invalid depth value");
    const double q = std::round(d / scale);
    if (q > 65535.0) throw DataError("depth png: value exceeds 16-bit range at this scale");
    raw[i] = static_cast<std::uint16_t>(q);
  }
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot write depth png: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng allocation failed");
  }
  std::vector<png_bytep> rows(depth.height());
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("png write failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, depth.width(), depth.height(), 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_set_swap(png);
  for (int v = 0; v < depth.height(); ++v) {
    rows[v] = reinterpret_cast<png_bytep>(raw.data() + static_cast<std::size_t>(v) * depth.width());
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

nlohmann::json camera_to_json(const Camera& cam, double depth_scale) {
  const auto& k = cam.intrinsics;
  const Mat4 m = cam.extrinsics.matrix();
  std::vector<double> ext(16);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) ext[r * 4 + c] = m(r, c);
  return {{"fx", k.fx},       {"fy", k.fy},         {"cx", k.cx},
          {"cy", k.cy},       {"width", k.width},   {"height", k.height},
          {"extrinsics", ext}, {"depth_scale", depth_scale}};
}

Camera camera_from_json(const nlohmann::json& j, double* depth_scale) {
  Camera cam;
  try {
    cam.intrinsics.fx = j.at("fx").get<double>();
    cam.intrinsics.fy = j.at("fy").get<double>();
    cam.intrinsics.cx = j.at("cx").get<double>();
    cam.intrinsics.cy = j.at("cy").get<double>();
    cam.intrinsics.width = j.at("width").get<int>();
    cam.intrinsics.height = j.at("height").get<int>();
    const auto ext = j.at("extrinsics").get<std::vector<double>>();
    if (ext.size() != 16) throw DataError("camera json: extrinsics must have 16 entries");
    Mat4 m;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = ext[r * 4 + c];
    cam.extrinsics = CameraExtrinsics::from_matrix(m);
    if (depth_scale) *depth_scale = j.value("depth_scale", 0.001);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("camera json: ") + e.what());
  }
  cam.intrinsics.validate();
  cam.extrinsics.validate();
  return cam;
}

}  // namespace sparsepose
