#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "scenes.hpp"
#include "sparsepose/fusion.hpp"
#include "sparsepose/voxel_grid.hpp"

#include <filesystem>

using namespace sparsepose;

namespace {

Camera small_camera() {
  Camera cam;
  cam.intrinsics = {50.0, 50.0, 7.5, 5.5, 16, 12};
  return cam;
}

const Aabb kEverywhere{Vec3::Constant(-100), Vec3::Constant(100)};

}  // namespace

TEST_CASE("one view with one valid pixel gives one point") {
  DepthImage d(16, 12);
  d.at(3, 4) = 1.0;
  std::vector<DepthImage> depths{d};
  std::vector<Camera> cams{small_camera()};
  const auto cloud = fuse_views(depths, cams, kEverywhere);
  CHECK(cloud.size() == 1);
  CHECK(cloud.source_view[0] == 0);
}

TEST_CASE("identical views duplicate every point") {
  DepthImage d(16, 12, 1.2);
  std::vector<DepthImage> one{d};
  std::vector<DepthImage> two{d, d};
  std::vector<Camera> c1{small_camera()};
  std::vector<Camera> c2{small_camera(), small_camera()};
  const auto a = fuse_views(one, c1, kEverywhere);
  const auto b = fuse_views(two, c2, kEverywhere);
  CHECK(b.size() == 2 * a.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(b.points[i + a.size()] == a.points[i]);
}

TEST_CASE("workspace crop and empty results") {
  DepthImage d(16, 12, 1.0);
  std::vector<DepthImage> depths{d};
  std::vector<Camera> cams{small_camera()};
  const Aabb box{Vec3(-0.02, -0.02, 0.5), Vec3(0.02, 0.02, 1.5)};
  const auto cloud = fuse_views(depths, cams, box);
  CHECK(cloud.size() > 0);
  CHECK(cloud.size() < 16 * 12);
  for (const auto& p : cloud.points) CHECK(box.contains(p));
  const auto none = fuse_views(depths, cams, Aabb{Vec3::Constant(10), Vec3::Constant(11)});
  CHECK(none.empty());
  std::vector<Camera> none_cams;
  CHECK_THROWS_AS(fuse_views(depths, none_cams, box), DataError);
}

TEST_CASE("object-only scene: point count equals rendered valid pixels") {
  const auto library = make_primitives();
  const auto bundle = testscene::make_scene({.seed = 4, .objects = 3}, library);
  std::size_t valid = 0;
  for (const auto& d : bundle.depths) valid += d.count_valid();
  REQUIRE(valid > 0);
  const auto cloud = fuse_views(bundle.depths, bundle.spec.cameras, bundle.workspace);
  CHECK(cloud.size() == valid);
}

TEST_CASE("view order only permutes blocks and leaves the voxel set unchanged") {
  const auto library = make_primitives();
  auto bundle = testscene::make_scene({.seed = 5, .objects = 4, .with_bin = true}, library);
  const auto a = fuse_views(bundle.depths, bundle.spec.cameras, bundle.workspace);
  std::vector<DepthImage> depths(bundle.depths.rbegin(), bundle.depths.rend());
  std::vector<Camera> cams(bundle.spec.cameras.rbegin(), bundle.spec.cameras.rend());
  const auto b = fuse_views(depths, cams, bundle.workspace);
  CHECK(a.size() == b.size());
  const auto ga = voxelize(a.points, 0.004, bundle.workspace.min);
  const auto gb = voxelize(b.points, 0.004, bundle.workspace.min);
  CHECK(ga.indices() == gb.indices());
}

TEST_CASE("serial and parallel fusion agree exactly") {
  const auto library = make_primitives();
  const auto bundle = testscene::make_scene({.seed = 6, .objects = 3, .with_bin = true, .noise = true}, library);
  const auto a = fuse_views(bundle.depths, bundle.spec.cameras, bundle.workspace, {}, Exec::Serial);
  const auto b = fuse_views(bundle.depths, bundle.spec.cameras, bundle.workspace, {}, Exec::Parallel);
  CHECK(a.points == b.points);
  CHECK(a.source_view == b.source_view);
}

TEST_CASE("PLY round trip keeps points bit-exact") {
  Rng rng(2);
  std::vector<Vec3> pts(100);
  for (auto& p : pts) p = Vec3(rng.normal(), rng.normal(), rng.normal());
  std::vector<double> scalar(pts.size(), 0.5);
  const auto path = std::filesystem::temp_directory_path() / "sparsepose_test_cloud.ply";
  write_ply(path, pts, scalar, "value", "seed=2");
  CHECK(read_ply_points(path) == pts);
  std::filesystem::remove(path);
}
