#include <benchmark/benchmark.h>

#include "recon/denoiser.hpp"
#include "recon/metrics.hpp"
#include "recon/rng.hpp"
#include "recon/sampler.hpp"
#include "recon/synth.hpp"

namespace {

using namespace recon;

GrfConfig bench_grf(int t, int hw) {
  GrfConfig cfg;
  cfg.spec = GridSpec{t, hw, hw, 1.0};
  cfg.seed = 7;
  return cfg;
}

void BM_GenGrf64(benchmark::State& state) {
  const GrfConfig cfg = bench_grf(8, 64);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gen_grf(cfg));
  }
}
BENCHMARK(BM_GenGrf64);

void BM_Rapsd64(benchmark::State& state) {
  const Field f = gen_grf(bench_grf(1, 64));
  for (auto _ : state) {
    benchmark::DoNotOptimize(rapsd_frame(f, 0));
  }
}
BENCHMARK(BM_Rapsd64);

void BM_DenoiseWindow32(benchmark::State& state) {
  NetConfig cfg;
  cfg.window = 3;
  cfg.base_channels = 8;
  LearnedModel model{cfg, init_params(cfg, 1), NormParams{0.0, 1.0}};
  const GridSpec wspec{3, 32, 32, 1.0};
  Rng rng(3);
  std::vector<double> v(wspec.cells());
  for (double& x : v) x = rng.normal();
  const Field window(wspec, std::move(v));
  const MaskField mask = MaskField::ones(wspec);
  const ScoreModel m = model;
  for (auto _ : state) {
    benchmark::DoNotOptimize(denoise_window(m, window, mask, 0.7));
  }
}
BENCHMARK(BM_DenoiseWindow32);

void BM_LossAndGrad32(benchmark::State& state) {
  NetConfig cfg;
  cfg.window = 3;
  cfg.base_channels = 8;
  LearnedModel model{cfg, init_params(cfg, 1), NormParams{0.0, 1.0}};
  const GridSpec wspec{3, 32, 32, 1.0};
  Rng rng(5);
  std::vector<double> v(wspec.cells()), n(wspec.cells());
  for (double& x : v) x = 0.5 * rng.normal();
  for (double& x : n) x = rng.normal();
  TrainSample s;
  s.window = Field(wspec, v);
  s.obs_mask = MaskField::ones(wspec);
  s.train_mask = MaskField::ones(wspec);
  s.sigma = 0.5;
  s.noise = n;
  std::vector<TrainSample> batch{s};
  for (auto _ : state) {
    NetParams grads;
    benchmark::DoNotOptimize(loss_and_grad(model, batch, grads));
  }
}
BENCHMARK(BM_LossAndGrad32);

void BM_DapsStepAnalytic16(benchmark::State& state) {
  AnalyticGaussianModel ag;
  ag.height = 16;
  ag.width = 16;
  ag.mean.assign(256, 0.0);
  ag.var_diag.assign(256, 1.0);
  const ScoreModel model = ag;
  const GridSpec spec{1, 16, 16, 1.0};
  const AnnealSchedule sched = AnnealSchedule::karras(30);
  DapsConfig cfg;
  cfg.seed = 11;
  const NormParams norm{0.0, 2.0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(daps_reconstruct(model, spec, {}, sched, cfg, norm));
  }
}
BENCHMARK(BM_DapsStepAnalytic16);

}  // namespace

BENCHMARK_MAIN();
