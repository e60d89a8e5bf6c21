// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Every criterion recomputes its own inputs, so they can run in any order.

#include "cases.hpp"
#include "commands.hpp"
#include "grad_suite.hpp"
#include "oracles.hpp"
#include "scenes.hpp"
#include "sparsepose/fusion.hpp"
#include "sparsepose/metrics.hpp"
#include "sparsepose/pipeline.hpp"
#include "sparsepose/tsdf.hpp"
#include "sparsepose/voxel_grid.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

using namespace sparsepose;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

constexpr double kDeg = std::numbers::pi / 180.0;

// 1: sparse TSDF against a dense volume over the whole workspace.
Outcome tsdf_vs_dense() {
  const auto library = make_primitives();
  double worst = 0;
  std::size_t missed = 0, compared = 0;
  int largest = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    testscene::SceneRequest req{.seed = seed, .objects = 2 + static_cast<int>(seed % 4), .with_bin = seed % 2 == 0,
                                .noise = seed % 3 == 0};
    const auto bundle = testscene::make_scene(req, library);
    const auto cloud = fuse_views(bundle.depths, bundle.spec.cameras, bundle.workspace);
    TsdfConfig cfg = TsdfConfig::from_voxel_size(0.004, 16);
    cfg.origin = bundle.workspace.min;
    SparseTsdf sparse(cfg);
    sparse.activate(cloud);
    for (std::size_t v = 0; v < bundle.depths.size(); ++v) sparse.integrate_view(bundle.depths[v], bundle.spec.cameras[v]);

    const Vec3 ext = bundle.workspace.extent() / cfg.voxel_size;
    const int nx = static_cast<int>(std::ceil(ext.x())), ny = static_cast<int>(std::ceil(ext.y())),
              nz = static_cast<int>(std::ceil(ext.z()));
    largest = std::max({largest, nx, ny, nz});
    auto dense = oracle::dense_tsdf(cfg.origin, {0, 0, 0}, cfg.voxel_size, cfg.truncation, nx, ny, nz);
    for (std::size_t v = 0; v < bundle.depths.size(); ++v)
      oracle::dense_integrate(dense, bundle.depths[v], bundle.spec.cameras[v]);
    for (int z = 0; z < nz; ++z)
      for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
          const auto& d = dense.at(x, y, z);
          const bool in_band = d.weight > 0 && std::abs(d.sdf) < 1;
          const auto s = sparse.voxel({x, y, z});
          if (!s) {
            missed += in_band;
            continue;
          }
          ++compared;
          worst = std::max({worst, std::abs(s->sdf - d.sdf), std::abs(s->weight - d.weight)});
        }
  }
  return {worst < 1e-6 && missed == 0 && largest <= 64,
          fmt("10 scenes, grid <= %d^3, %zu voxels compared, max |diff| %.2e, missed in-band %zu", largest, compared,
              worst, missed)};
}

// 2: occupied-voxel growth against the dense grid on a 10-object bin.
Outcome occupancy_scaling() {
  const auto library = make_primitives();
  const auto bundle = testscene::make_scene({.seed = 2, .objects = 10, .bin_size = Vec3(0.32, 0.24, 0.16), .with_bin = true},
                                            library);
  const auto cloud = fuse_views(bundle.depths, bundle.spec.cameras, bundle.workspace);
  const std::vector<double> thetas{0.008, 0.004, 0.002, 0.001};
  const auto rows = occupancy_stats(cloud.points, bundle.spec.bin, thetas);
  std::vector<double> inv, sparse, dense;
  std::ostringstream table;
  for (const auto& r : rows) {
    inv.push_back(1.0 / r.theta);
    sparse.push_back(static_cast<double>(r.sparse));
    dense.push_back(static_cast<double>(r.dense));
    table << fmt(" %gmm:%.2f%%", r.theta * 1000, 100 * r.ratio);
  }
  const double ks = loglog_slope(inv, sparse), kd = loglog_slope(inv, dense);
  return {ks >= 1.6 && ks <= 2.4 && std::abs(kd - 3.0) <= 1e-9,
          fmt("sparse exponent %.3f, dense exponent %.12f, ratio", ks, kd) + table.str()};
}

// 3: finite-difference gradient check of every differentiable op.
Outcome gradients() {
  const auto cases = gradsuite::run();
  double worst = 0;
  std::string worst_op;
  bool single = false;
  for (const auto& c : cases) {
    if (c.rel > worst) {
      worst = c.rel;
      worst_op = c.op + " " + c.shape;
    }
    single = single || c.shape.rfind("K=1 ", 0) == 0;
  }
  return {worst < 1e-4 && single, fmt("%zu checks, worst relative error %.2e (", cases.size(), worst) + worst_op + ")"};
}

// 4: windowed attention against naive per-window softmax attention.
Outcome attention() {
  Rng rng(44);
  double worst = 0;
  int windows_done = 0, largest = 0;
  std::vector<int> sizes;
  for (int w = 0; w < 100; ++w) sizes.push_back(w == 0 ? 1 : w == 1 ? 64 : rng.uniform_int(1, 64));
  for (int start = 0; start < 100; start += 10) {
    const std::vector<int> batch(sizes.begin() + start, sizes.begin() + start + 10);
    const int heads = std::array<int, 3>{1, 2, 4}[(start / 10) % 3];
    const int n = gradsuite::total(batch);
    const auto windows = gradsuite::windows_of(batch);
    std::vector<std::vector<int>> rows;
    for (const auto& w : windows) {
      rows.push_back(w.rows);
      largest = std::max(largest, static_cast<int>(w.rows.size()));
    }
    const auto q = oracle::random_matrix(rng, n, 16), k = oracle::random_matrix(rng, n, 16),
               v = oracle::random_matrix(rng, n, 16);
    const double scale = 1.0 / std::sqrt(16.0 / heads);
    const auto ref = oracle::naive_window_attention(q, k, v, rows, heads, scale);
    for (Exec exec : {Exec::Serial, Exec::Parallel}) {
      const auto got = nn::window_attention(nn::Tensor::constant(q), nn::Tensor::constant(k), nn::Tensor::constant(v),
                                            windows, heads, scale, exec);
      worst = std::max(worst, (got.value() - ref).cwiseAbs().maxCoeff());
    }
    windows_done += static_cast<int>(batch.size());
  }
  return {worst < 1e-10 && windows_done == 100, fmt("%d windows (K_w 1..%d, H in {1,2,4}), max |diff| %.2e",
                                                    windows_done, largest, worst)};
}

// 5: closed-form values.
Outcome analytic() {
  Eigen::VectorXd h(1), p(1);
  h << 1.0;
  p << 0.5;
  const double focal = gaussian_focal_loss(p, h, 4.0, 2.0).value;
  const double roi = roi_score(0.0, 2.0, 6.0, 4.0);
  const double roi_exact = 0.5 * (1.0 + std::exp(-0.25));
  const auto one = nn::Tensor::scalar(1.0);
  const double total = nn::multitask_loss(one, one, one, one, one, nn::LossWeights{1, 3, 2, 3, 1}).item();
  const bool ok = std::abs(focal - 0.25 * std::log(2.0)) <= 1e-12 && std::abs(roi - roi_exact) <= 1e-9 &&
                  std::abs(roi - 0.8894) < 5e-5 && total == 10.0;
  return {ok, fmt("focal %.15f (0.25 ln 2 = %.15f), RoI score %.10f (~0.8894), weighted total %.1f", focal,
                  0.25 * std::log(2.0), roi, total)};
}

// 6: ground-truth votes through clustering, aggregation and ICP.
Outcome oracle_pipeline() {
  const auto library = make_primitives();
  PipelineConfig cfg;
  cfg.voxel.theta = 0.002;
  int objects = 0, recovered = 0;
  double worst_t = 0, worst_add = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int n = 5 + static_cast<int>(seed % 11);
    const auto bundle = testscene::make_scene(
        {.seed = 600 + seed, .objects = n, .bin_size = Vec3(0.32, 0.24, 0.16), .with_bin = true, .noise = true}, library);
    const auto input = prepare_scene(bundle, cfg);
    const auto targets = make_targets(input, bundle.gt, cfg);
    const auto poses = estimate_oracle(input, targets, bundle.gt, library, cfg);
    const auto rep = evaluate(poses, bundle.gt, library, bundle.spec.cameras);
    for (const auto& o : rep.objects) {
      ++objects;
      if (o.estimate < 0) continue;
      const bool symmetric = find_model(library, o.class_id).symmetries.size() > 1;
      const double err = symmetric ? o.add_s : o.add;
      worst_t = std::max(worst_t, o.translation_error);
      worst_add = std::max(worst_add, err);
      recovered += o.translation_error < 0.002 && err < 0.002;
    }
  }
  return {recovered == objects, fmt("%d/%d objects within 2 mm, worst translation %.3f mm, worst ADD(-S) %.3f mm",
                                    recovered, objects, worst_t * 1000, worst_add * 1000)};
}

// 7: single-scene overfitting through the command-line entry points.
Outcome toy_training() {
  const fs::path root = fs::temp_directory_path() / "sparsepose_acceptance_toy";
  fs::remove_all(root);
  PipelineConfig cfg = PipelineConfig::load(fs::path(SPARSEPOSE_SOURCE_DIR) / "configs" / "toy.ini");
  cli::SynthOptions synth;
  synth.out = root / "scene";
  synth.objects = 3;
  synth.bin_size = Vec3(0.16, 0.12, 0.08);
  synth.min_gap = 0.02;
  cli::cmd_synth(synth, cfg);
  const auto result = cli::cmd_train_toy(synth.out, root / "run", cfg, std::nullopt, false);
  const auto poses = cli::cmd_estimate(synth.out, result.checkpoint, false, root / "est", cfg);
  const auto report = cli::cmd_eval(root / "est" / "poses.json", synth.out, root / "est", cfg);
  int good = 0;
  std::string errs;
  for (const auto& o : report.objects) {
    good += o.add_s < 0.005;
    errs += std::isfinite(o.add_s) ? fmt(" %.2f", o.add_s * 1000) : std::string(" missed");
  }
  const double first = result.trace.front().total, last = result.trace.back().total;
  return {result.trace.size() <= 2000 && last < 0.5 * first && good >= 2,
          fmt("%zu steps, loss %.3f -> %.3f (%.2fx), %d/%zu objects ADD-S < 5 mm, ADD-S mm:", result.trace.size(), first,
              last, last / first, good, report.objects.size()) + errs};
}

// 8: clustering and rotation averaging against brute force.
Outcome clustering() {
  int same = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto pts = cases::blob_points(1000 + seed, 500);
    same += dbscan(pts, 0.008, 6) == oracle::naive_dbscan(pts, 0.008, 6);
  }
  int close = 0;
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Mat3 center;
    const auto rs = cases::rotation_cloud(2000 + seed, 10 + static_cast<int>(seed), 25 * kDeg, &center);
    std::vector<Mat3> local;
    for (const auto& r : rs) local.push_back(center.transpose() * r);
    const Mat3 coarse = oracle::grid_search_chordal(local, 25 * kDeg, 25);
    const Mat3 best = center * oracle::grid_search_chordal(local, 2 * kDeg, 20, coarse);
    const double err = rotation_angle(chordal_mean(rs), best) / kDeg;
    worst = std::max(worst, err);
    close += err < 1.0;
  }
  return {same == 50 && close == 20,
          fmt("DBSCAN labels identical on %d/50 sets of 500 points; chordal mean within 1 deg on %d/20 (worst %.3f deg)",
              same, close, worst)};
}

// 9: ICP recovery from 5 deg / 5 mm and monotone error on noiseless data.
Outcome icp() {
  const auto library = make_primitives();
  std::map<int, std::vector<Vec3>> models;
  for (const auto& m : library) models[m.class_id] = m.cloud;
  int ok = 0, monotone = 0, max_iter = 0;
  double worst_r = 0, worst_t = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto& model = library[seed % 2 == 0 ? 0 : 1];  // box and L-bracket
    const auto trial = cases::icp_trial(model, 3000 + seed);
    std::vector<IcpTrace> traces;
    const auto out = batched_icp({trial.start}, models, trial.scene, IcpParams{}, &traces);
    const double er = cases::symmetric_angle_deg(model, out[0].rotation, trial.truth.rotation);
    const double et = (out[0].translation - trial.truth.translation).norm();
    worst_r = std::max(worst_r, er);
    worst_t = std::max(worst_t, et);
    max_iter = std::max(max_iter, traces[0].iterations);
    ok += out[0].refined && er < 0.5 && et < 0.0005 && traces[0].iterations <= 30;

    const auto clean = cases::icp_trial(model, 4000 + seed, 5.0, 5.0, true);
    batched_icp({clean.start}, models, clean.scene, IcpParams{}, &traces);
    bool mono = true;
    for (std::size_t i = 1; i < traces[0].rmse.size(); ++i) mono = mono && traces[0].rmse[i] <= traces[0].rmse[i - 1];
    monotone += mono;
  }
  return {ok == 50 && monotone == 50,
          fmt("%d/50 recovered (worst %.4f deg, %.4f mm, <= %d iterations), RMSE non-increasing %d/50", ok, worst_r,
              worst_t * 1000, max_iter, monotone)};
}

// 10: metric identities.
Outcome metric_sanity() {
  const auto library = make_primitives(512);
  const auto bundle = testscene::make_scene({.seed = 10, .objects = 8, .bin_size = Vec3(0.32, 0.24, 0.16)}, library);
  const PoseSet gt = gt_as_poses(bundle.gt);
  EvalOptions opt;
  opt.millimeter_mssd = true;
  const auto rep = evaluate(gt, bundle.gt, library, bundle.spec.cameras, opt);
  double worst = 0;
  for (const auto& o : rep.objects) worst = std::max({worst, o.add, o.add_s, o.mssd, o.mspd, o.translation_error});
  const bool identity = worst == 0.0 && rep.add_auc == 1.0 && rep.add_s_auc == 1.0 && rep.ap == 1.0;

  PoseSet sym = gt;
  Rng rng(10);
  for (auto& p : sym) {
    const auto& s = find_model(library, p.class_id).symmetries;
    p.rotation = p.rotation * s[rng.uniform_int(0, static_cast<int>(s.size()) - 1)];
  }
  double sym_worst = 0;
  for (const auto& o : evaluate(sym, bundle.gt, library, bundle.spec.cameras).objects) sym_worst = std::max(sym_worst, o.mssd);

  int ordered = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto& m = library[i % library.size()];
    const Mat3 r1 = rng.rotation(), r2 = rng.rotation();
    const Vec3 t1(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(0.3, 0.6));
    const Vec3 t2 = t1 + 0.01 * Vec3(rng.normal(), rng.normal(), rng.normal());
    ordered += add_s(r1, t1, r2, t2, m.cloud) <= add(r1, t1, r2, t2, m.cloud);
  }
  return {identity && sym_worst < 1e-12 && ordered == 1000,
          fmt("GT vs GT: max error %.1e, AUC %.3f/%.3f, AP %.3f; symmetric GT MSSD %.1e; ADD-S <= ADD on %d/1000", worst,
              rep.add_auc, rep.add_s_auc, rep.ap, sym_worst, ordered)};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional criterion ids restrict the run, e.g. `acceptance 1 4`.
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  struct Criterion {
    int id;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, 30, tsdf_vs_dense},  {2, 60, occupancy_scaling}, {3, 120, gradients},     {4, 60, attention},
      {5, 1, analytic},        {6, 120, oracle_pipeline},  {7, 900, toy_training},  {8, 60, clustering},
      {9, 60, icp},            {10, 60, metric_sanity},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && secs <= c.budget_s;
    failed += !pass;
    std::cout << "Criterion " << c.id << ": " << (pass ? "PASS" : "FAIL") << "  " << o.detail
              << fmt("  [%.1fs, budget %.0fs]", secs, c.budget_s) << std::endl;
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criteria failed" : std::string("acceptance: all passed"))
            << std::endl;
  return failed ? 1 : 0;
}
