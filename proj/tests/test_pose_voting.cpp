#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cases.hpp"
#include "oracles.hpp"
#include "scenes.hpp"
#include "sparsepose/fusion.hpp"
#include "sparsepose/heatmap.hpp"
#include "sparsepose/pose_voting.hpp"

#include <numbers>

using namespace sparsepose;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Rot6d r6(double a, double b, double c, double d, double e, double f) {
  Rot6d r;
  r << a, b, c, d, e, f;
  return r;
}

VoteSet votes_for(const std::vector<Vec3>& centers, const Vec3& target, const Mat3& rot, double conf = 1.0) {
  VoteSet v;
  for (const auto& c : centers) {
    v.centers.push_back(c);
    v.offsets.push_back(target - c);
    v.rot6d.push_back(matrix_to_rot6d(rot));
    v.confidence.push_back(conf);
    v.class_ids.push_back(2);
  }
  return v;
}

}  // namespace

TEST_CASE("6D rotation map examples") {
  CHECK(rot6d_to_matrix(r6(2, 0, 0, 0, 3, 0)).isApprox(Mat3::Identity(), 1e-15));
  const Mat3 m = rot6d_to_matrix(r6(1, 0, 0, 1, 1, 0));
  CHECK((m.col(1) - Vec3(0, 1, 0)).norm() < 1e-15);
  CHECK_THROWS_AS(rot6d_to_matrix(r6(1, 0, 0, 2, 0, 0)), DegenerateRotation);
  CHECK_THROWS_AS(rot6d_to_matrix(r6(0, 0, 0, 0, 1, 0)), DegenerateRotation);
}

TEST_CASE("6D rotation map properties on random inputs") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    Rot6d r;
    for (int k = 0; k < 6; ++k) r[k] = rng.normal();
    const Mat3 m = rot6d_to_matrix(r);
    CHECK((m.transpose() * m - Mat3::Identity()).norm() < 1e-12);
    CHECK(std::abs(m.determinant() - 1.0) < 1e-12);
    CHECK((rot6d_to_matrix(3.7 * r) - m).norm() < 1e-12);
    const Mat3 q = rng.rotation();
    CHECK((rot6d_to_matrix(matrix_to_rot6d(q)) - q).norm() < 1e-12);
  }
}

TEST_CASE("6D backward matches finite differences") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Rot6d r;
    for (int k = 0; k < 6; ++k) r[k] = rng.normal();
    Mat3 g;
    for (int k = 0; k < 9; ++k) g(k) = rng.normal();
    const Rot6d ad = rot6d_backward(r, g);
    for (int k = 0; k < 6; ++k) {
      Rot6d a = r, b = r;
      a[k] += 1e-6;
      b[k] -= 1e-6;
      const double fd = ((rot6d_to_matrix(a) - rot6d_to_matrix(b)).cwiseProduct(g)).sum() / 2e-6;
      CHECK(std::abs(fd - ad[k]) < 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("smooth L1 values") {
  Eigen::MatrixXd pred(1, 3), target = Eigen::MatrixXd::Zero(1, 3);
  Eigen::VectorXi valid = Eigen::VectorXi::Ones(1);
  pred << 0.005, 0, 0;
  CHECK(smooth_l1(pred, target, valid).value == doctest::Approx(0.00125).epsilon(1e-12));
  pred << 0.02, 0, 0;
  CHECK(smooth_l1(pred, target, valid).value == doctest::Approx(0.015).epsilon(1e-12));
  pred << -0.02, 0.005, 0;
  CHECK(smooth_l1(pred, target, valid).value == doctest::Approx(0.01625).epsilon(1e-12));
  valid << 0;
  CHECK(smooth_l1(pred, target, valid).value == 0.0);
}

TEST_CASE("chamfer rotation loss") {
  const auto library = make_primitives(400);
  Rng rng(3);
  for (const auto& model : library) {
    const auto pts = subsample(model.cloud, 150);
    const Mat3 gt = rng.rotation();
    CHECK(chamfer_rotation(gt, gt, pts).value == 0.0);
    const Mat3 pred = rng.rotation();
    std::vector<Vec3> a, b;
    for (const auto& p : pts) {
      a.push_back(pred * p);
      b.push_back(gt * p);
    }
    CHECK(chamfer_rotation(pred, gt, pts).value == doctest::Approx(oracle::brute_chamfer(a, b)).epsilon(1e-12));
  }
  // Rotating a symmetric object by one of its symmetries only leaves the
  // sampling gap; a tilt of the same angle does not.
  const auto& cyl = find_model(library, 3);
  const Mat3 gt = rng.rotation();
  const auto dense = sample_surface(cyl.mesh, 6000, 1);
  const double sym = chamfer_rotation(gt * cyl.symmetries[4], gt, dense).value;
  const double tilt = chamfer_rotation(gt * axis_angle(Vec3::UnitX(), 40 * kDeg), gt, dense).value;
  CHECK(sym < 0.05 * tilt);
  CHECK(std::abs(rotation_angle(cyl.symmetries[4], Mat3::Identity()) - 40 * kDeg) < 1e-9);
}

TEST_CASE("DBSCAN matches the quadratic reference") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto pts = cases::blob_points(seed);
    for (auto [eps, min_pts] : {std::pair{0.006, 5}, std::pair{0.01, 10}}) {
      const auto got = dbscan(pts, eps, min_pts);
      const auto ref = oracle::naive_dbscan(pts, eps, min_pts);
      CHECK(got == ref);
    }
  }
  const std::vector<Vec3> none;
  CHECK(dbscan(none, 0.01, 3).empty());
  const std::vector<Vec3> lonely{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  CHECK(dbscan(lonely, 0.01, 2) == std::vector<int>{-1, -1});
  CHECK(dbscan(lonely, 0.01, 1) == std::vector<int>{0, 1});
  CHECK_THROWS_AS(dbscan(lonely, 0.0, 1), ConfigError);
}

TEST_CASE("chordal mean") {
  Rng rng(4);
  const Mat3 r = rng.rotation();
  const std::vector<Mat3> same(5, r);
  CHECK((chordal_mean(same) - r).norm() < 1e-12);
  const Vec3 axis = Vec3(1, 2, 3).normalized();
  const std::vector<Mat3> pair{r * axis_angle(axis, 20 * kDeg), r * axis_angle(axis, -20 * kDeg)};
  CHECK((chordal_mean(pair) - r).norm() < 1e-9);

  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Mat3 center;
    auto rs = cases::rotation_cloud(seed, 12, 30 * kDeg, &center);
    // Search in the frame of the center.
    std::vector<Mat3> local;
    for (const auto& m : rs) local.push_back(center.transpose() * m);
    const Mat3 coarse = oracle::grid_search_chordal(local, 30 * kDeg, 30);
    const Mat3 grid = center * oracle::grid_search_chordal(local, 2 * kDeg, 20, coarse);
    CHECK(rotation_angle(chordal_mean(rs), grid) < 1 * kDeg);
  }
}

TEST_CASE("vote aggregation") {
  const Mat3 r = Rng(5).rotation();
  const std::vector<Vec3> centers{Vec3(0, 0, 0), Vec3(0.01, 0, 0), Vec3(0, 0.02, 0.01)};
  const VoteSet v = votes_for(centers, Vec3(0.05, 0.05, 0.05), r);
  const std::vector<int> labels{0, 0, 0};
  const auto poses = aggregate_votes(v, labels, 1.0);
  REQUIRE(poses.size() == 1);
  CHECK((poses[0].translation - Vec3(0.05, 0.05, 0.05)).norm() < 1e-15);
  CHECK((poses[0].rotation - r).norm() < 1e-12);
  CHECK(poses[0].class_id == 2);
  CHECK(poses[0].support == 3);

  VoteSet two = votes_for({Vec3::Zero(), Vec3::Zero()}, Vec3::Zero(), r);
  two.offsets[0] = Vec3(0, 0, 0.01);
  two.offsets[1] = Vec3(0, 0, 0.03);
  CHECK((aggregate_votes(two, std::vector<int>{0, 0}, 1.0)[0].translation - Vec3(0, 0, 0.02)).norm() < 1e-15);

  // Only the top-confidence half contributes.
  two.confidence = {0.9, 0.1};
  CHECK((aggregate_votes(two, std::vector<int>{0, 0}, 0.5)[0].translation - Vec3(0, 0, 0.01)).norm() < 1e-15);
  CHECK(aggregate_votes(two, std::vector<int>{-1, -1}, 0.5).empty());

  // Rigid equivariance.
  Rng rng(6);
  VoteSet rnd;
  for (int i = 0; i < 40; ++i) {
    rnd.centers.emplace_back(rng.uniform(0, 0.1), rng.uniform(0, 0.1), rng.uniform(0, 0.1));
    rnd.offsets.emplace_back(0.01 * rng.normal(), 0.01 * rng.normal(), 0.01 * rng.normal());
    rnd.rot6d.push_back(matrix_to_rot6d(r * axis_angle(Vec3(rng.normal(), rng.normal(), rng.normal()).normalized(), 0.2)));
    rnd.confidence.push_back(rng.uniform());
    rnd.class_ids.push_back(1);
  }
  std::vector<int> lab(40);
  for (int i = 0; i < 40; ++i) lab[i] = i % 3;
  const Mat3 g = rng.rotation();
  const Vec3 tg(0.3, -0.2, 0.1);
  VoteSet moved = rnd;
  for (int i = 0; i < 40; ++i) {
    moved.centers[i] = g * rnd.centers[i] + tg;
    moved.offsets[i] = g * rnd.offsets[i];
    moved.rot6d[i] = matrix_to_rot6d(g * rot6d_to_matrix(rnd.rot6d[i]));
  }
  const auto a = aggregate_votes(rnd, lab, 0.5), b = aggregate_votes(moved, lab, 0.5);
  REQUIRE(a.size() == 3);
  REQUIRE(b.size() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK((g * a[k].translation + tg - b[k].translation).norm() < 1e-9);
    CHECK((g * a[k].rotation - b[k].rotation).norm() < 1e-9);
  }
}

TEST_CASE("ICP fixed point, recovery and monotone error") {
  const auto library = make_primitives();
  const auto& bracket = find_model(library, 2);
  std::map<int, std::vector<Vec3>> models;
  for (const auto& m : library) models[m.class_id] = m.cloud;

  const auto exact = cases::icp_trial(bracket, 1, 0.0, 0.0, true);
  const auto fixed = batched_icp({exact.truth}, models, exact.scene, {});
  CHECK(fixed[0].refined);
  CHECK((fixed[0].rotation - exact.truth.rotation).norm() < 1e-9);
  CHECK((fixed[0].translation - exact.truth.translation).norm() < 1e-9);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto& model = seed % 2 ? bracket : find_model(library, 1);
    const auto trial = cases::icp_trial(model, 100 + seed);
    std::vector<IcpTrace> traces;
    const auto out = batched_icp({trial.start}, models, trial.scene, {}, &traces);
    REQUIRE(out[0].refined);
    CHECK(traces[0].iterations <= 30);
    CHECK(cases::symmetric_angle_deg(model, out[0].rotation, trial.truth.rotation) < 0.5);
    CHECK((out[0].translation - trial.truth.translation).norm() < 0.0005);

    const auto clean = cases::icp_trial(model, 200 + seed, 5.0, 5.0, true);
    batched_icp({clean.start}, models, clean.scene, {}, &traces);
    for (std::size_t i = 1; i < traces[0].rmse.size(); ++i) CHECK(traces[0].rmse[i] <= traces[0].rmse[i - 1] + 1e-15);
  }
}

TEST_CASE("ICP without overlap leaves the pose unrefined") {
  const auto library = make_primitives(500);
  std::map<int, std::vector<Vec3>> models{{1, library[0].cloud}};
  Pose p;
  p.class_id = 1;
  const std::vector<Vec3> far{Vec3(5, 5, 5), Vec3(5, 5, 5.001)};
  const auto out = batched_icp({p}, models, far, {});
  CHECK_FALSE(out[0].refined);
  CHECK(out[0].translation == p.translation);
  Pose unknown;
  unknown.class_id = 42;
  CHECK_FALSE(batched_icp({unknown}, models, far, {})[0].refined);
  const std::vector<std::vector<int>> no_support;
  CHECK_THROWS_AS(batched_icp({p}, models, far, {}, nullptr, &no_support), DataError);
}

TEST_CASE("pose targets against ground truth") {
  const auto library = make_primitives();
  const auto bundle = testscene::make_scene({.seed = 14, .objects = 4, .with_bin = true}, library);
  const auto cloud = fuse_views(bundle.depths, bundle.spec.cameras, bundle.workspace);
  const auto grid = voxelize(cloud.points, 0.004, bundle.workspace.min);
  const auto t = pose_targets(grid, bundle.gt);
  const auto y = objectness_target(grid, bundle.gt);
  int owned = 0;
  for (int i = 0; i < grid.size(); ++i) {
    CHECK(t.valid[i] == y[i]);
    if (t.object[i] < 0) {
      CHECK(t.offsets.row(i).norm() == 0.0);
      continue;
    }
    ++owned;
    const Vec3 c = bundle.gt.centroids[t.object[i]];
    CHECK((grid.center(i) + t.offsets.row(i).transpose() - c).norm() < 1e-15);
    CHECK(t.rotations[i] == bundle.gt.objects[t.object[i]].rotation);
  }
  CHECK(owned > 0);
}
