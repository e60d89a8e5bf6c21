// Serial reference against the OpenMP path for the three hot kernels.
#include "sparsepose/config.hpp"
#include "sparsepose/fusion.hpp"
#include "sparsepose/nn/layers.hpp"
#include "sparsepose/nn/ops.hpp"
#include "sparsepose/synthetic.hpp"
#include "sparsepose/tsdf.hpp"
#include "sparsepose/voxel_grid.hpp"

#include <benchmark/benchmark.h>

using namespace sparsepose;

namespace {

struct BenchScene {
  SceneBundle bundle;
  FusedPointCloud cloud;
  std::vector<VoxelIndex> voxels;
  nn::NeighborTable nbr;
};

const BenchScene& scene() {
  static const BenchScene s = [] {
    BenchScene b;
    const auto lib = make_primitives(512);
    const Aabb bin{Vec3(-0.16, -0.12, 0.0), Vec3(0.16, 0.12, 0.16)};
    SceneSpec spec = sample_scene(lib, bin, 10, 1);
    spec.with_bin = true;
    spec.cameras = default_cameras(bin);
    b.bundle = make_bundle(std::move(spec), lib, false);
    b.cloud = fuse_views(b.bundle.depths, b.bundle.spec.cameras, b.bundle.workspace);
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(b.cloud.size()), 3);
    for (std::size_t i = 0; i < b.cloud.size(); ++i) pts.row(static_cast<Eigen::Index>(i)) = b.cloud.points[i].transpose();
    b.voxels = voxelize(pts, 0.004, b.bundle.workspace.min).indices();
    b.nbr = nn::build_neighbors(b.voxels);
    return b;
  }();
  return s;
}

Exec mode(const benchmark::State& state) { return state.range(0) == 0 ? Exec::Serial : Exec::Parallel; }

void BM_TsdfIntegrate(benchmark::State& state) {
  const auto& s = scene();
  const PipelineConfig cfg;
  TsdfConfig tc = TsdfConfig::from_voxel_size(0.004, cfg.voxel.block_voxels, cfg.voxel.truncation_factor);
  tc.origin = s.bundle.workspace.min;
  for (auto _ : state) {
    SparseTsdf tsdf(tc);
    tsdf.activate(s.cloud);
    for (std::size_t v = 0; v < s.bundle.depths.size(); ++v)
      tsdf.integrate_view(s.bundle.depths[v], s.bundle.spec.cameras[v], DepthRange{}, mode(state));
    benchmark::DoNotOptimize(tsdf.block_count());
  }
}

void BM_SubmConv(benchmark::State& state) {
  const auto& s = scene();
  nn::ParameterStore store(1);
  const nn::SubmConv3 conv(store, "conv", 32, 32);
  Rng rng(2);
  nn::Matrix x(s.nbr.rows, 32);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
  const nn::Tensor in = nn::Tensor::constant(x);
  for (auto _ : state) benchmark::DoNotOptimize(conv(in, s.nbr, mode(state)).value().data());
  state.counters["voxels"] = s.nbr.rows;
}

void BM_WindowAttention(benchmark::State& state) {
  const auto& s = scene();
  const auto windows = partition_windows(s.voxels, 8);
  Rng rng(3);
  const auto random = [&] {
    nn::Matrix m(static_cast<Eigen::Index>(s.voxels.size()), 32);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.normal();
    return nn::Tensor::constant(m);
  };
  const nn::Tensor q = random(), k = random(), v = random();
  for (auto _ : state)
    benchmark::DoNotOptimize(nn::window_attention(q, k, v, windows, 4, 1.0 / std::sqrt(8.0), mode(state)).value().data());
  state.counters["windows"] = static_cast<double>(windows.size());
}

}  // namespace

BENCHMARK(BM_TsdfIntegrate)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SubmConv)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WindowAttention)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
