// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "csa/kernels.hpp"
#include "csa/rng.hpp"

namespace {

csa::MatrixF random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  csa::Rng rng(seed);
  csa::MatrixF m(rows, cols);
  for (auto& v : m.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return m;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1);
  const auto b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(csa::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(64, 512);

void BM_SoftmaxRows(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 3);
  for (auto _ : state) benchmark::DoNotOptimize(csa::softmax_rows(a));
}
BENCHMARK(BM_SoftmaxRows)->RangeMultiplier(4)->Range(64, 1024);

void BM_LayerNorm(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const auto x = random_matrix(k, 128, 4);
  const csa::MatrixF gain(1, 128, std::vector<float>(128, 1.0f));
  const csa::MatrixF bias(1, 128);
  for (auto _ : state) benchmark::DoNotOptimize(csa::layer_norm_rows(x, gain, bias));
}
BENCHMARK(BM_LayerNorm)->RangeMultiplier(4)->Range(64, 1024);

}  // namespace

BENCHMARK_MAIN();
