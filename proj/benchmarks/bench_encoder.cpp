// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "csa/encoder.hpp"
#include "csa/rng.hpp"

namespace {

csa::EncoderConfig scaled_config(std::size_t l) {
  csa::EncoderConfig c;
  c.heads = 4;
  c.head_dim = 32;
  c.hidden = 128;
  c.input_len = l;
  return c;
}

// Forward pass over K candidates at L = 64.
void BM_EncoderForward(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const auto c = scaled_config(64);
  csa::Rng rng(7);
  const auto params = csa::init_params<float>(c, rng);
  csa::MatrixF a(k, c.input_len);
  for (auto& v : a.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const std::vector<bool> valid(k, true);
  for (auto _ : state) benchmark::DoNotOptimize(csa::encoder_forward(a, valid, params, c));
}
BENCHMARK(BM_EncoderForward)->RangeMultiplier(2)->Range(64, 1024)->Unit(benchmark::kMillisecond);

// Forward plus backward through both losses, one training sample.
void BM_EncoderTrainStep(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const auto c = scaled_config(64);
  csa::Rng rng(8);
  const auto params = csa::init_params<float>(c, rng);
  csa::MatrixF a(k, c.input_len);
  for (auto& v : a.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const std::vector<bool> valid(k, true);
  for (auto _ : state) {
    csa::EncoderTape<float> pass(params, c);
    const auto& refined = pass.forward(a, valid);
    const auto& recon = pass.reconstruct();
    csa::MatrixF d_recon(recon.rows(), recon.cols(), std::vector<float>(recon.size(), 1e-3f));
    csa::MatrixF d_refined(refined.rows(), refined.cols(), std::vector<float>(refined.size(), 1e-3f));
    benchmark::DoNotOptimize(csa::encoder_backward(pass, &d_refined, &d_recon));
  }
}
BENCHMARK(BM_EncoderTrainStep)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
