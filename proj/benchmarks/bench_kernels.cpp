#include <benchmark/benchmark.h>

#include "fmrlrec/lru.hpp"
#include "fmrlrec/matryoshka.hpp"
#include "fmrlrec/ops.hpp"
#include "fmrlrec/rng.hpp"

using namespace fmrlrec;

namespace {

Tensor<float> filled(Shape shape, std::uint64_t seed) {
  std::vector<float> v(shape_numel(shape));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>((i * 2654435761u + seed) % 1000) / 1000.f - 0.5f;
  return Tensor<float>::from_vector(std::move(shape), std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = filled({256, n}, 1), b = filled({n, n}, 2);
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b).data().data());
  state.SetItemsProcessed(state.iterations() * 256 * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_MaskedLinear(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto ladder = SizeLadder::doubling(8, n);
  const auto layer = make_masked_linear<float>(n, 2 * n, LinearCase::up, 2, ladder, true, true, 0.1, 0, 1);
  const auto x = filled({256, n}, 3);
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(linear_forward(x, layer).data().data());
}
BENCHMARK(BM_MaskedLinear)->Arg(64)->Arg(256);

void lru_bench(benchmark::State& state, bool parallel) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const std::size_t width = 64;
  const auto p = init_ring<float>(width, 0.0, 0.9, 0, 7, SizeLadder::doubling(8, width));
  const auto x = filled({8, len, width}, 4);
  NoGradGuard g;
  for (auto _ : state) {
    const auto y = parallel ? lru_parallel_scan(p, x) : lru_sequential(p, x);
    benchmark::DoNotOptimize(y.data().data());
  }
}

void BM_LruParallelScan(benchmark::State& state) { lru_bench(state, true); }
void BM_LruSequential(benchmark::State& state) { lru_bench(state, false); }
BENCHMARK(BM_LruParallelScan)->Arg(16)->Arg(64)->Arg(256);
BENCHMARK(BM_LruSequential)->Arg(16)->Arg(64)->Arg(256);

}  // namespace
BENCHMARK_MAIN();
