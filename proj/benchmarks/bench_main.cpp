#include <benchmark/benchmark.h>

#include <random>

#include "anuw/attention.hpp"
#include "anuw/network.hpp"
#include "anuw/objective.hpp"
#include "anuw/ops.hpp"
#include "anuw/trainer.hpp"

using namespace anuw;

namespace {

Tensor random(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(std::move(s));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

void BM_Conv3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const Tensor x = random({c, n, n}, 1), w = random({c, c, 3, 3}, 2), b = random({c}, 3);
  for (auto _ : state) {
    Tape t(Tape::Mode::inference);
    benchmark::DoNotOptimize(conv2d(t.constant(x), t.constant(w), t.constant(b), 1, 1).value().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(9 * c * c * n * n));
}
BENCHMARK(BM_Conv3x3)->Args({8, 64})->Args({16, 32})->Args({32, 16});

void BM_Conv3x3Backward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  Parameter x("x", random({c, n, n}, 1)), w("w", random({c, c, 3, 3}, 2)), b("b", random({c}, 3));
  for (auto _ : state) {
    Tape t;
    t.backward(sum(conv2d(t.parameter(x), t.parameter(w), t.parameter(b), 1, 1)));
  }
}
BENCHMARK(BM_Conv3x3Backward)->Args({8, 64})->Args({16, 32});

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random({n, n}, 4), b = random({n, n}, 5);
  for (auto _ : state) {
    Tape t(Tape::Mode::inference);
    benchmark::DoNotOptimize(matmul(t.constant(a), t.constant(b)).value().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_Psnl(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  PsnlParams p("psnl", 16, 8);
  p.init(1);
  const Tensor f = random({16, n, n}, 6);
  for (auto _ : state) {
    Tape t(Tape::Mode::inference);
    benchmark::DoNotOptimize(psnl_forward(t.constant(f), p).value().data());
  }
}
BENCHMARK(BM_Psnl)->Arg(32)->Arg(64);

void BM_TotalLossWithGradient(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor y = random({n, n}, 7);
  for (auto& v : y.values()) v = 0.5 + 0.4 * v;
  Parameter pred("p", y);
  for (auto& v : pred.value().values()) v += 0.05;
  const PixelMask valid(n, n, true);
  for (auto _ : state) {
    Tape t;
    t.backward(total_loss(t.parameter(pred), y, {}, {}, valid));
  }
}
BENCHMARK(BM_TotalLossWithGradient)->Arg(64)->Arg(128);

ModelConfig bench_model() {
  ModelConfig c;
  c.levels = 3;
  c.base_channels = 8;
  return c;
}

void BM_ModelForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  AnuModel m(bench_model(), 1);
  const Tensor x = random({3, n, n}, 8);
  for (auto _ : state) benchmark::DoNotOptimize(m.predict(x).data());
}
BENCHMARK(BM_ModelForward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto data = generate_synthetic(1, n, n, 0.2, 1);
  TrainConfig cfg;
  cfg.model = bench_model();
  AnuModel m(cfg.effective_model(), 1);
  AdamState adam;
  const PixelMask valid = build_mask(data[0].label).complement();
  const TrainItem item{&data[0].rgb, &data[0].label, &valid};
  for (auto _ : state) benchmark::DoNotOptimize(train_batch(m, adam, std::span(&item, 1), 1e-4, cfg));
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
