#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sparsepose {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Error categories map onto CLI exit codes (config 2, data 3, numerical 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

enum class Exec { Serial, Parallel };

/// Integer voxel/block/window coordinate. Ordered lexicographically (x, y, z).
struct VoxelIndex {
  int x = 0;
  int y = 0;
  int z = 0;

  auto operator<=>(const VoxelIndex&) const = default;

  VoxelIndex operator+(const VoxelIndex& o) const { return {x + o.x, y + o.y, z + o.z}; }
};

inline int floor_div(int a, int b) {
  int q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline VoxelIndex floor_div(const VoxelIndex& v, int b) {
  return {floor_div(v.x, b), floor_div(v.y, b), floor_div(v.z, b)};
}

/// floor((p - origin) / step) per axis; lower-inclusive.
inline VoxelIndex index_of(const Vec3& p, const Vec3& origin, double step) {
  const Vec3 q = ((p - origin) / step).array().floor();
  return {static_cast<int>(q.x()), static_cast<int>(q.y()), static_cast<int>(q.z())};
}

inline Vec3 center_of(const VoxelIndex& v, const Vec3& origin, double step) {
  return origin + step * Vec3(v.x + 0.5, v.y + 0.5, v.z + 0.5);
}

// 21 bits per axis, offset by 2^20; unique for |coordinate| < 2^20.
inline std::uint64_t pack_key(const VoxelIndex& v) {
  constexpr std::int64_t kOffset = 1 << 20;
  constexpr std::uint64_t kMask = (1u << 21) - 1;
  const auto ux = static_cast<std::uint64_t>(v.x + kOffset) & kMask;
  const auto uy = static_cast<std::uint64_t>(v.y + kOffset) & kMask;
  const auto uz = static_cast<std::uint64_t>(v.z + kOffset) & kMask;
  return (ux << 42) | (uy << 21) | uz;
}

inline VoxelIndex unpack_key(std::uint64_t key) {
  constexpr std::int64_t kOffset = 1 << 20;
  constexpr std::uint64_t kMask = (1u << 21) - 1;
  return {static_cast<int>(static_cast<std::int64_t>((key >> 42) & kMask) - kOffset),
          static_cast<int>(static_cast<std::int64_t>((key >> 21) & kMask) - kOffset),
          static_cast<int>(static_cast<std::int64_t>(key & kMask) - kOffset)};
}

struct VoxelIndexHash {
  std::size_t operator()(const VoxelIndex& v) const noexcept {
    return std::hash<std::uint64_t>{}(pack_key(v));
  }
};

/// Axis-aligned box in meters; min inclusive, max inclusive.
struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  Vec3 extent() const { return max - min; }
};

/// Deterministic, platform-independent random stream (splitmix64 seeded xoshiro256**).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi);  // inclusive
  double normal();
  Mat3 rotation();  // uniform on SO(3)

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Projects a 3x3 matrix onto SO(3) (closest rotation in Frobenius norm).
Mat3 project_to_so3(const Mat3& m);

Mat3 axis_angle(const Vec3& axis, double angle_rad);

/// Geodesic angle between two rotations, radians.
double rotation_angle(const Mat3& a, const Mat3& b);

}  // namespace sparsepose
