#include <benchmark/benchmark.h>

#include <vector>

#include "egomesh/backbone.hpp"
#include "egomesh/model.hpp"
#include "egomesh/rng.hpp"
#include "egomesh/selfcheck.hpp"
#include "egomesh/tensor.hpp"
#include "egomesh/training.hpp"

namespace {

using namespace egomesh;

std::vector<double> random_values(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

void BM_GemmNN(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto a = random_values(n * n, rng);
  const auto b = random_values(n * n, rng);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    kernels::gemm_nn(n, n, n, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(2 * n * n * n));
}
BENCHMARK(BM_GemmNN)->Arg(64)->Arg(128)->Arg(256);

void BM_WindowAttention(benchmark::State& state) {
  const auto grid = static_cast<std::size_t>(state.range(0));
  const std::size_t channels = 32, window = 8;
  Rng rng(2);
  FeatureMap f{Tensor({grid * grid, channels}, random_values(grid * grid * channels, rng)), grid, grid, {}};
  for (std::size_t y = 0; y < grid; ++y)
    for (std::size_t x = 0; x < grid; ++x) f.centers.push_back({x + 0.5, y + 0.5});
  const auto weights = WindowAttentionWeights::init(channels, 2, rng);
  const std::size_t shift = state.range(1) ? window / 2 : 0;
  for (auto _ : state) benchmark::DoNotOptimize(window_attention(f, weights, window, shift));
}
BENCHMARK(BM_WindowAttention)->Args({16, 0})->Args({32, 0})->Args({32, 1})->Unit(benchmark::kMillisecond);

void BM_ModelForward(benchmark::State& state) {
  RunConfig cfg = state.range(0) ? RunConfig{} : toy_config();
  Model model(cfg);
  Rng rng(3);
  const std::size_t h = cfg.backbone.height, w = cfg.backbone.width;
  const Tensor image({h, w, 3}, random_values(h * w * 3, rng));
  NoGradScope no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(image));
}
BENCHMARK(BM_ModelForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  RunConfig cfg = toy_config();
  cfg.train.steps = 1;
  cfg.train.batch_size = 4;
  Model model(cfg);
  const Dataset data = generate_dataset(4, 1, cfg.body_seed, model.body(), model.rig(), cfg.data.ranges);
  AdamState adam = AdamState::zeros(model.trainable());
  for (auto _ : state) benchmark::DoNotOptimize(train(model, adam, data));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
