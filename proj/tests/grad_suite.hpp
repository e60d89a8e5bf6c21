#pragma once

// Finite-difference gradient checks for every differentiable operation, shared
// by the unit tests and the acceptance binary.

#include "oracles.hpp"
#include "sparsepose/nn/layers.hpp"
#include "sparsepose/nn/losses.hpp"

#include <set>
#include <string>
#include <vector>

namespace gradsuite {

using namespace sparsepose;
using namespace sparsepose::nn;
using oracle::Matrix;

struct Case {
  std::string op;
  std::string shape;
  double rel = 0.0;
};

// Collapses any output to a scalar with fixed random weights so every output
// entry contributes to the checked gradient.
inline Tensor project(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, Tensor::constant(oracle::random_matrix(rng, y.rows(), y.cols()))));
}

// Windows of the given sizes over consecutive rows.
inline std::vector<Window> windows_of(const std::vector<int>& sizes) {
  std::vector<Window> out;
  int row = 0;
  for (std::size_t w = 0; w < sizes.size(); ++w) {
    Window win;
    win.id = {static_cast<int>(w), 0, 0};
    for (int i = 0; i < sizes[w]; ++i) win.rows.push_back(row++);
    out.push_back(win);
  }
  return out;
}

inline int total(const std::vector<int>& sizes) {
  int n = 0;
  for (int s : sizes) n += s;
  return n;
}

// Sparse voxel set in a small cube: a line, a blob and an isolated voxel.
inline std::vector<VoxelIndex> voxel_set(int variant) {
  std::vector<VoxelIndex> v;
  if (variant == 0) return {{0, 0, 0}};
  if (variant == 1) {
    for (int i = 0; i < 5; ++i) v.push_back({i, 0, 0});
    return v;
  }
  Rng rng(41);
  std::set<VoxelIndex> s;
  while (s.size() < 14) s.insert({rng.uniform_int(0, 3), rng.uniform_int(0, 3), rng.uniform_int(0, 3)});
  s.insert({7, 7, 7});
  return {s.begin(), s.end()};
}

inline std::vector<Case> run() {
  std::vector<Case> out;
  Rng rng(2024);
  auto rnd = [&](Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0) {
    return oracle::random_matrix(rng, r, c, lo, hi);
  };
  auto record = [&](const std::string& op, const std::string& shape, const oracle::GradCheck& g) {
    out.push_back({op, shape, g.max_rel});
  };

  // Elementary ops.
  for (auto [n, c] : {std::pair{1, 1}, std::pair{3, 4}, std::pair{7, 5}}) {
    const std::string shape = std::to_string(n) + "x" + std::to_string(c);
    const Matrix a = rnd(n, c), b = rnd(n, c), w = rnd(c, 3), row = rnd(1, c), bias = rnd(1, 3);
    record("matmul", shape, oracle::check_gradients([](auto& x) { return project(matmul(x[0], x[1]), 1); }, {a, w}));
    record("add/sub/mul/scale", shape, oracle::check_gradients([](auto& x) {
             return project(scale(mul(add(x[0], x[1]), sub(x[0], x[1])), 0.7), 2);
           }, {a, b}));
    record("add_row/mul_row", shape, oracle::check_gradients([](auto& x) {
             return project(mul_row(add_row(x[0], x[1]), x[1]), 3);
           }, {a, row}));
    record("linear", shape,
           oracle::check_gradients([](auto& x) { return project(linear(x[0], x[1], x[2]), 4); }, {a, w, bias}));
    // Keep relu inputs away from the kink.
    Matrix away = a;
    for (Eigen::Index i = 0; i < away.size(); ++i) away(i) += away(i) >= 0 ? 0.1 : -0.1;
    record("relu", shape, oracle::check_gradients([](auto& x) { return project(relu(x[0]), 5); }, {away}));
    record("sigmoid", shape, oracle::check_gradients([](auto& x) { return project(sigmoid(x[0]), 6); }, {a}));
    record("softmax_rows", shape,
           oracle::check_gradients([](auto& x) { return project(softmax_rows(x[0]), 7); }, {a}));
    if (c > 1) {
      record("layernorm_rows", shape,
             oracle::check_gradients([](auto& x) { return project(layernorm_rows(x[0]), 8); }, {a}));
    }
    record("concat/slice", shape, oracle::check_gradients([c = c](auto& x) {
             const Tensor z = concat_cols({x[0], x[1]});
             return project(slice_cols(z, c / 2, c), 9);
           }, {a, b}));
    std::vector<int> rows{0};
    for (int i = n - 1; i >= 0; --i) rows.push_back(i);
    record("gather_rows", shape,
           oracle::check_gradients([rows](auto& x) { return project(gather_rows(x[0], rows), 10); }, {a}));
    std::vector<int> seg(n);
    for (int i = 0; i < n; ++i) seg[i] = i % 2;
    record("segment_mean", shape, oracle::check_gradients([seg](auto& x) {
             return project(segment_mean(x[0], seg, 2), 11);
           }, {a}));
    record("sum/mean", shape,
           oracle::check_gradients([](auto& x) { return add(sum(x[0]), scale(mean(x[0]), 3.0)); }, {a}));
  }

  // Heatmap losses.
  for (int n : {1, 6, 25}) {
    const std::string shape = std::to_string(n) + "x1";
    const Matrix p = rnd(n, 1, 0.05, 0.95);
    Eigen::VectorXd h(n);
    Eigen::VectorXi y(n);
    for (int i = 0; i < n; ++i) {
      h[i] = rng.uniform();
      y[i] = rng.uniform() < 0.4 ? 1 : 0;
    }
    record("gaussian_focal_loss", shape,
           oracle::check_gradients([h](auto& x) { return gaussian_focal_loss(x[0], h, 4.0, 2.0); }, {p}));
    record("focal_loss", shape, oracle::check_gradients([y](auto& x) { return focal_loss(x[0], y); }, {p}));
  }
  for (auto [n, k] : {std::pair{1, 2}, std::pair{5, 4}, std::pair{20, 5}}) {
    Eigen::VectorXi labels(n);
    for (int i = 0; i < n; ++i) labels[i] = rng.uniform_int(0, k - 1);
    Eigen::VectorXd w(k);
    for (int i = 0; i < k; ++i) w[i] = rng.uniform(0.2, 3.0);
    record("weighted_cross_entropy", std::to_string(n) + "x" + std::to_string(k),
           oracle::check_gradients([labels, w](auto& x) { return weighted_cross_entropy(x[0], labels, w); },
                                   {rnd(n, k, -2, 2)}));
  }

  // Attention on projected q, k, v, including single-voxel windows.
  const std::vector<std::pair<std::vector<int>, int>> layouts{{{1}, 1}, {{1, 3, 2}, 2}, {{4, 1, 7, 1, 3}, 4}};
  for (const auto& [sizes, heads] : layouts) {
    const int n = total(sizes);
    const auto windows = windows_of(sizes);
    const std::string shape = "K=" + std::to_string(n) + " H=" + std::to_string(heads);
    record("window_attention", shape, oracle::check_gradients([&windows, heads = heads](auto& x) {
             return project(window_attention(x[0], x[1], x[2], windows, heads, 0.5), 12);
           }, {rnd(n, 8), rnd(n, 8), rnd(n, 8)}));
  }

  // Dual-branch block, every parameter and the input.
  for (const auto& [sizes, heads] : layouts) {
    const int n = total(sizes);
    AttentionConfig cfg;
    cfg.channels = 4;
    cfg.heads = heads == 4 ? 4 : heads;
    ParameterStore store(7);
    DualBranchBlock block(store, "blk", cfg);
    const auto small = windows_of(sizes);
    const auto medium = windows_of({n});
    Tensor x(rnd(n, 4), true, "x");
    std::vector<Tensor> leaves = store.parameters();
    leaves.push_back(x);
    record("dual_branch_block", "K=" + std::to_string(n) + " H=" + std::to_string(cfg.heads),
           oracle::check_leaf_gradients(leaves, [&] { return project(block(x, small, medium, Exec::Serial), 13); }));
  }

  // Submanifold convolution, function form and module form.
  for (int variant = 0; variant < 3; ++variant) {
    const auto vox = voxel_set(variant);
    const auto nbr = build_neighbors(vox);
    const int n = static_cast<int>(vox.size());
    const std::string shape = "N=" + std::to_string(n);
    for (Exec exec : {Exec::Serial, Exec::Parallel}) {
      record(exec == Exec::Serial ? "submanifold_conv (serial)" : "submanifold_conv (parallel)", shape,
             oracle::check_gradients([&nbr, exec](auto& x) { return project(submanifold_conv(x[0], x[1], nbr, exec), 14); },
                                     {rnd(n, 2), rnd(27 * 2, 3)}));
    }
  }

  // Pose losses.
  for (int n : {1, 4, 9}) {
    const std::string shape = std::to_string(n) + "x3";
    Matrix target = rnd(n, 3, -0.03, 0.03);
    Matrix pred = target + rnd(n, 3, -0.03, 0.03);
    // Avoid the Huber switch point.
    for (Eigen::Index i = 0; i < pred.size(); ++i)
      if (std::abs(std::abs(pred(i) - target(i)) - 0.01) < 1e-3) pred(i) += 3e-3;
    Eigen::VectorXi valid = Eigen::VectorXi::Ones(n);
    if (n > 2) valid[1] = 0;
    record("smooth_l1", shape, oracle::check_gradients([target, valid](auto& x) {
             return smooth_l1(x[0], target, valid, 0.01);
           }, {pred}));
    record("rot6d_to_matrix", std::to_string(n) + "x6",
           oracle::check_gradients([](auto& x) { return project(rot6d_to_matrix(x[0]), 15); }, {rnd(n, 6)}));

    std::vector<Vec3> model;
    Rng mr(90 + n);
    for (int i = 0; i < 24; ++i) model.emplace_back(0.03 * mr.uniform(-1, 1), 0.02 * mr.uniform(-1, 1), 0.01 * mr.uniform(-1, 1));
    std::vector<Mat3> gt;
    std::vector<const std::vector<Vec3>*> models;
    Matrix r6(n, 6);
    for (int i = 0; i < n; ++i) {
      gt.push_back(mr.rotation());
      models.push_back(&model);
      const Mat3 near = gt.back() * axis_angle(Vec3(mr.normal(), mr.normal(), mr.normal()).normalized(), 0.3);
      r6.row(i) << near(0, 0), near(1, 0), near(2, 0), near(0, 1), near(1, 1), near(2, 1);
    }
    // Through the 6D map, as the network uses it.
    record("chamfer_rotation_loss", std::to_string(n) + "x6", oracle::check_gradients([gt, models, valid](auto& x) {
             return chamfer_rotation_loss(rot6d_to_matrix(x[0]), gt, models, valid, Exec::Serial);
           }, {r6}));
  }

  // Composite multi-task loss.
  for (int variant = 0; variant < 3; ++variant) {
    LossWeights w;
    if (variant == 1) w = {0.5, 1.0, 2.5, 0.1, 4.0};
    if (variant == 2) w = {0.0, 0.0, 1.0, 0.0, 0.0};
    record("multitask_loss", "weights " + std::to_string(variant), oracle::check_gradients([w](auto& x) {
             return multitask_loss(sum(mul(x[0], x[0])), sum(sigmoid(x[1])), mean(x[2]), sum(x[3]), sum(relu(x[4])), w);
           }, {rnd(1, 1), rnd(2, 2), rnd(3, 1), rnd(1, 1), rnd(2, 1, 0.2, 1.0)}));
    record("weighted_sum", "weights " + std::to_string(variant), oracle::check_gradients([](auto& x) {
             const std::vector<double> ws{0.3, -1.2};
             return weighted_sum({sum(x[0]), mean(x[1])}, ws);
           }, {rnd(2, 2), rnd(1, 3)}));
  }
  return out;
}

}  // namespace gradsuite
