#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "scenes.hpp"
#include "sparsepose/fusion.hpp"
#include "sparsepose/voxel_grid.hpp"

#include <cmath>
#include <map>
#include <set>
#include <sstream>

using namespace sparsepose;

namespace {

SparseVoxelGrid grid_of(const std::vector<VoxelIndex>& idx, int channels = 1) {
  std::set<VoxelIndex> s(idx.begin(), idx.end());
  std::vector<VoxelIndex> sorted(s.begin(), s.end());
  Eigen::MatrixXd f(static_cast<Eigen::Index>(sorted.size()), channels);
  for (Eigen::Index i = 0; i < f.rows(); ++i)
    for (Eigen::Index c = 0; c < channels; ++c) f(i, c) = static_cast<double>(i * channels + c);
  return SparseVoxelGrid(1.0, Vec3::Zero(), sorted, f);
}

std::vector<VoxelIndex> random_indices(Rng& rng, int n, int range) {
  std::vector<VoxelIndex> out;
  for (int i = 0; i < n; ++i)
    out.push_back({rng.uniform_int(-range, range), rng.uniform_int(-range, range), rng.uniform_int(-range, range)});
  return out;
}

}  // namespace

TEST_CASE("voxelize index convention and features") {
  std::vector<Vec3> one{Vec3(0.001, 0.001, 0.001)};
  const auto g = voxelize(one, 0.002, Vec3::Zero());
  REQUIRE(g.size() == 1);
  CHECK(g.indices()[0] == VoxelIndex{0, 0, 0});
  CHECK(g.channels() == 4);
  CHECK(g.features().row(0).head<3>().norm() < 1e-12);

  std::vector<Vec3> two{Vec3(0.0005, 0.001, 0.001), Vec3(0.0015, 0.001, 0.001)};
  const auto g2 = voxelize(two, 0.002, Vec3::Zero());
  REQUIRE(g2.size() == 1);
  CHECK(g2.features()(0, 3) == doctest::Approx(std::log(3.0)).epsilon(1e-12));

  std::vector<Vec3> edge{Vec3(0.002, 0.0, 0.0)};
  CHECK(voxelize(edge, 0.002, Vec3::Zero()).indices()[0] == VoxelIndex{1, 0, 0});

  std::vector<Vec3> none;
  CHECK(voxelize(none, 0.002, Vec3::Zero()).empty());
}

TEST_CASE("voxelize with an extra channel gives five features") {
  Eigen::MatrixXd pts(2, 4);
  pts << 0.001, 0.001, 0.001, 0.2, 0.0011, 0.001, 0.001, 0.4;
  const auto g = voxelize(pts, 0.002, Vec3::Zero());
  REQUIRE(g.channels() == 5);
  CHECK(g.features()(0, 4) == doctest::Approx(0.3));
}

TEST_CASE("voxelize is idempotent on voxel centres and sorted") {
  Rng rng(1);
  std::vector<Vec3> pts(3000);
  for (auto& p : pts) p = Vec3(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(0, 0.05));
  const Vec3 origin(-0.1, -0.1, 0.0);
  const auto g = voxelize(pts, 0.004, origin);
  CHECK(std::is_sorted(g.indices().begin(), g.indices().end()));
  const auto centers = g.centers();
  const auto again = voxelize(centers, 0.004, origin);
  CHECK(again.indices() == g.indices());
  for (int i = 0; i < g.size(); ++i) CHECK(g.find(g.indices()[i]) == i);
  CHECK_FALSE(g.find({1000, 0, 0}).has_value());
}

TEST_CASE("coarsen parents and counts") {
  std::vector<VoxelIndex> idx;
  for (int x = 0; x < 10; ++x) idx.push_back({x, 0, 0});
  const auto fine = grid_of(idx, 2);
  const auto c = coarsen(fine, 10);
  REQUIRE(c.grid.size() == 1);
  CHECK(c.grid.indices()[0] == VoxelIndex{0, 0, 0});
  CHECK(c.grid.features()(0, 0) == doctest::Approx(fine.features().col(0).mean()));

  const auto c2 = coarsen(grid_of({{10, 0, 0}, {-1, 0, 0}}), 10);
  CHECK(c2.grid.indices() == std::vector<VoxelIndex>{{-1, 0, 0}, {1, 0, 0}});

  Rng rng(2);
  const auto rnd = grid_of(random_indices(rng, 2000, 60));
  const auto cr = coarsen(rnd, 10);
  std::set<VoxelIndex> brute;
  for (const auto& v : rnd.indices()) brute.insert({static_cast<int>(std::floor(v.x / 10.0)),
                                                    static_cast<int>(std::floor(v.y / 10.0)),
                                                    static_cast<int>(std::floor(v.z / 10.0))});
  CHECK(static_cast<std::size_t>(cr.grid.size()) == brute.size());
  for (int i = 0; i < rnd.size(); ++i) CHECK(cr.grid.indices()[cr.parent[i]] == floor_div(rnd.indices()[i], 10));
}

TEST_CASE("lift and filter against brute-force membership") {
  Rng rng(3);
  const auto fine = grid_of(random_indices(rng, 1500, 40), 3);
  const auto coarse = coarsen(fine, 10);
  const Eigen::MatrixXd cf = Eigen::MatrixXd::Random(coarse.grid.size(), 2);

  std::vector<int> all(coarse.grid.size());
  std::iota(all.begin(), all.end(), 0);
  const auto full = lift_and_filter(fine, coarse.grid, all, cf, 10);
  CHECK(full.grid.indices() == fine.indices());
  CHECK(full.grid.channels() == 5);
  CHECK(full.grid.features().leftCols(3) == fine.features());

  const auto none = lift_and_filter(fine, coarse.grid, std::vector<int>{}, cf, 10);
  CHECK(none.grid.empty());

  std::vector<int> keep;
  for (int i = 0; i < coarse.grid.size(); ++i)
    if (rng.uniform() < 0.4) keep.push_back(i);
  const auto part = lift_and_filter(fine, coarse.grid, keep, cf, 10);
  std::set<VoxelIndex> kept_ids;
  for (int r : keep) kept_ids.insert(coarse.grid.indices()[r]);
  std::vector<VoxelIndex> brute;
  for (const auto& v : fine.indices())
    if (kept_ids.count(floor_div(v, 10))) brute.push_back(v);
  CHECK(part.grid.indices() == brute);
  for (int i = 0; i < part.grid.size(); ++i) {
    CHECK(part.grid.features().row(i).tail(2) == cf.row(part.coarse_rows[i]));
    CHECK(fine.indices()[part.fine_rows[i]] == part.grid.indices()[i]);
  }
}

TEST_CASE("window partition is a partition matching floor division") {
  const std::vector<VoxelIndex> pair{{0, 0, 0}, {3, 3, 3}};
  CHECK(partition_windows(pair, 4).size() == 1);
  Rng rng(4);
  const auto g = grid_of(random_indices(rng, 800, 20));
  CHECK(partition_windows(g.indices(), 1).size() == static_cast<std::size_t>(g.size()));
  for (int w : {2, 4, 8}) {
    const auto windows = partition_windows(g.indices(), w);
    std::map<VoxelIndex, std::vector<int>> brute;
    for (int i = 0; i < g.size(); ++i) brute[floor_div(g.indices()[i], w)].push_back(i);
    REQUIRE(windows.size() == brute.size());
    std::vector<int> seen(g.size(), 0);
    std::size_t k = 0;
    for (const auto& [id, rows] : brute) {
      CHECK(windows[k].id == id);
      CHECK(windows[k].rows == rows);
      for (int r : windows[k].rows) ++seen[r];
      ++k;
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
  }
}

TEST_CASE("occupancy statistics") {
  const Aabb ws{Vec3::Zero(), Vec3(0.32, 0.24, 0.16)};
  std::vector<Vec3> one{Vec3(0.1, 0.1, 0.1)};
  const std::vector<double> thetas{0.008, 0.004, 0.002};
  const auto rows = occupancy_stats(one, ws, thetas);
  for (const auto& r : rows) CHECK(r.sparse == 1);
  CHECK(rows[1].dense == 8 * rows[0].dense);
  CHECK(rows[2].dense == 8 * rows[1].dense);
  CHECK(rows[0].dense == 40u * 30u * 20u);
  std::ostringstream csv;
  write_occupancy_csv(csv, rows);
  CHECK(csv.str().rfind("theta_mm,sparse,dense,ratio\n", 0) == 0);
  const std::vector<double> x{1, 2, 4, 8}, y{3, 12, 48, 192};
  CHECK(loglog_slope(x, y) == doctest::Approx(2.0));
}

TEST_CASE("rendered bin scene is sparse") {
  // The ratio scales like surface * theta / volume, so it depends on the bin:
  // a 0.6 x 0.4 x 0.3 m bin stays under 10% already at 8 mm.
  const auto library = make_primitives();
  testscene::SceneRequest req{.seed = 3, .objects = 10, .bin_size = Vec3(0.6, 0.4, 0.3), .with_bin = true};
  req.rig.distance = 1.0;
  const auto bundle = testscene::make_scene(req, library);
  const auto cloud = fuse_views(bundle.depths, bundle.spec.cameras, bundle.workspace);
  const std::vector<double> thetas{0.008, 0.002};
  const auto rows = occupancy_stats(cloud.points, bundle.workspace, thetas);
  CHECK(rows[0].ratio < 0.10);
  CHECK(rows[1].ratio < 0.03);
}
