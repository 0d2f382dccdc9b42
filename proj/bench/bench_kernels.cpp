// Serial reference vs OpenMP kernels, followed by the per-stage latency
// report of the recommended preset.
#include <benchmark/benchmark.h>

#include <iostream>

#include "dal/camerabranch/sample.hpp"
#include "dal/kernels/im2col.hpp"
#include "dal/pipeline/trainer.hpp"

namespace {

using namespace dal;

kernels::Exec exec_of(const benchmark::State& st) { return st.range(0) ? kernels::Exec::Parallel : kernels::Exec::Serial; }

std::vector<float> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return v;
}

void BM_Im2col(benchmark::State& st) {
  const kernels::ConvGeometry g{64, 48, 48, 3, 1, 1};
  const auto image = random_vector(static_cast<std::size_t>(g.channels) * g.height * g.width, 1);
  std::vector<float> cols(static_cast<std::size_t>(g.channels) * 9 * g.out_height() * g.out_width());
  for (auto _ : st) {
    kernels::im2col(image.data(), g, cols.data(), exec_of(st));
    benchmark::DoNotOptimize(cols.data());
  }
}
BENCHMARK(BM_Im2col)->Arg(0)->Arg(1);

void BM_Col2im(benchmark::State& st) {
  const kernels::ConvGeometry g{64, 48, 48, 3, 1, 1};
  const auto cols = random_vector(static_cast<std::size_t>(g.channels) * 9 * g.out_height() * g.out_width(), 2);
  std::vector<float> image(static_cast<std::size_t>(g.channels) * g.height * g.width);
  for (auto _ : st) {
    std::fill(image.begin(), image.end(), 0.f);
    kernels::col2im(cols.data(), g, image.data(), exec_of(st));
    benchmark::DoNotOptimize(image.data());
  }
}
BENCHMARK(BM_Col2im)->Arg(0)->Arg(1);

void BM_Conv2dForwardBackward(benchmark::State& st) {
  kernels::set_default_exec(exec_of(st));
  auto x = tc::Tensorf::from_data({2, 64, 48, 48}, random_vector(2 * 64 * 48 * 48, 3), true);
  auto w = tc::Tensorf::from_data({64, 64, 3, 3}, random_vector(64 * 64 * 9, 4), true);
  for (auto _ : st) {
    auto y = tc::sum(tc::conv2d(x, w, tc::Tensorf(), 1, 1));
    tc::backward(y);
    benchmark::DoNotOptimize(y.item());
  }
  kernels::set_default_exec(kernels::Exec::Parallel);
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

struct CameraFixture {
  std::vector<cam::Frustum> frusta;
  tc::Tensorf feat, depth;
  CameraFixture() {
    const auto cfg = pipe::config_from_json(Json{{"model", {{"preset", "ablation"}}}});
    const auto data = pipe::Dataset::generate({}, 3, 2);
    for (const auto& s : data.samples) frusta.push_back(pipe::prepare_frame(s, data.rig, cfg, false, 0).frustum);
    const auto& f = frusta[0];
    const int bn = 2 * f.views, c = cfg.model.image.out_channels;
    feat = tc::Tensorf::from_data({bn, c, f.feat_h, f.feat_w}, random_vector(std::size_t(bn) * c * f.feat_h * f.feat_w, 5));
    depth = tc::Tensorf::from_data({bn, f.depth_bins, f.feat_h, f.feat_w},
                                   random_vector(std::size_t(bn) * f.depth_bins * f.feat_h * f.feat_w, 6));
  }
};

void BM_LiftSplat(benchmark::State& st) {
  static const CameraFixture fx;
  for (auto _ : st) {
    auto bev = cam::lift_splat(fx.feat, fx.depth, fx.frusta, exec_of(st));
    benchmark::DoNotOptimize(bev.data().data());
  }
}
BENCHMARK(BM_LiftSplat)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_VoxelsToDense(benchmark::State& st) {
  static const auto grids = [] {
    const auto cfg = pipe::config_from_json(Json{{"model", {{"preset", "ablation"}}}});
    const auto data = pipe::Dataset::generate({}, 4, 8);
    std::vector<pb::VoxelGrid> g;
    for (const auto& s : data.samples) g.push_back(pb::voxelize(s.sweeps, cfg.model.voxel, 1));
    return g;
  }();
  for (auto _ : st) {
    auto t = pb::voxels_to_dense(grids, exec_of(st));
    benchmark::DoNotOptimize(t.data().data());
  }
}
BENCHMARK(BM_VoxelsToDense)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();

  const auto cfg = pipe::config_from_json(Json{{"model", {{"preset", "recommended"}}}});
  pipe::DalModel model(cfg.model, cfg.seed);
  const auto data = pipe::Dataset::generate({}, 11, 4);
  const auto report = pipe::profile_latency(model, cfg, data, 2, 10);
  std::cout << "\nper-stage inference latency, preset recommended, batch 1\n" << report.to_text();
  return 0;
}
