#pragma once

#include "sparsepose/camera.hpp"
#include "sparsepose/ground_truth.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace sparsepose {

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;  // outward (counter-clockwise) winding

  double volume() const;
  Vec3 volume_centroid() const;
  double surface_area() const;
  Mesh transformed(const Mat3& r, const Vec3& t) const;
  Aabb bounds() const;
};

struct ObjectModel {
  int class_id = 0;
  std::string name;
  Mesh mesh;                 // centered on its volume centroid
  std::vector<Vec3> cloud;   // canonical surface samples
  std::vector<Mat3> symmetries;  // always contains identity first
  double diameter = 0.0;
};

/// Box 40x30x20 mm, L-bracket, notched cylinder, tube (class ids 1..4).
std::vector<ObjectModel> make_primitives(std::size_t cloud_points = 2048, std::uint64_t seed = 7);

Mesh make_box(double sx, double sy, double sz);
/// Surface of revolution about z from an (r, z) profile; r == 0 points become poles.
Mesh make_revolution(const std::vector<Eigen::Vector2d>& profile, int segments);
Mesh make_uv_sphere(double radius, int stacks, int slices);
std::vector<Vec3> sample_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed);
const ObjectModel& find_model(const std::vector<ObjectModel>& library, int class_id);

struct NoiseParams {
  double depth_sigma = 0.001;
  double dropout = 0.02;
};

struct ObjectInstance {
  int class_id = 0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

struct SceneSpec {
  Aabb bin;                 // interior; floor at bin.min.z()
  bool with_bin = true;     // render floor and walls
  std::vector<ObjectInstance> objects;
  std::vector<Camera> cameras;
  NoiseParams noise;
  std::uint64_t seed = 0;
};

struct SceneOptions {
  bool single_layer = true;  // objects float 1 mm above the floor, no stacking
  double min_gap = 0.001;    // AABB separation
  int max_trials = 10000;
};

/// Rejection-sampled, collision-free (by AABB) object placement. Cameras and
/// noise are left at defaults; see default_cameras.
SceneSpec sample_scene(const std::vector<ObjectModel>& library, const Aabb& bin, int n_objects, std::uint64_t seed,
                       const SceneOptions& options = {});

struct CameraRig {
  int views = 3;
  double arc_deg = 60.0;
  double distance = 0.55;
  int width = 640;
  int height = 480;
  double focal = 600.0;
};

/// Views on an arc in the x-z plane above the bin, all looking at its center.
std::vector<Camera> default_cameras(const Aabb& bin, const CameraRig& rig = {});

/// Z-buffer rasterization of all instances (and bin when enabled), then
/// noise drawn from (scene seed, view). noise = false renders exact depth.
DepthImage render_depth(const SceneSpec& scene, const std::vector<ObjectModel>& library, const Camera& cam,
                        int view_index = 0, bool noise = true);
DepthImage render_meshes(const std::vector<Mesh>& meshes, const Camera& cam);

SceneGroundTruth export_gt(const SceneSpec& scene, const std::vector<ObjectModel>& library);

/// Workspace crop used for fusion: bin interior grown by a margin.
Aabb scene_workspace(const SceneSpec& scene, double margin = 0.005);

struct SceneBundle {
  SceneSpec spec;
  std::vector<ObjectModel> library;
  std::vector<DepthImage> depths;
  SceneGroundTruth gt;
  Aabb workspace;
  double depth_scale = 1e-4;
};

SceneBundle make_bundle(SceneSpec spec, std::vector<ObjectModel> library, bool noise = true);

/// scene.json, cam_XX.json, depth_XX.png, gt.json, models/models.json,
/// models/class_<id>.ply.
void write_bundle(const std::filesystem::path& dir, const SceneBundle& bundle);
SceneBundle load_bundle(const std::filesystem::path& dir);

}  // namespace sparsepose
