// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <cmath>

#include "csa/diffusion.hpp"
#include "csa/encoder.hpp"
#include "csa/query_expansion.hpp"
#include "csa/rerank.hpp"
#include "csa/rng.hpp"
#include "csa/search.hpp"

namespace {

struct Fixture {
  csa::EmbeddingMatrix embeddings;
  std::vector<csa::RankingList> rankings;

  explicit Fixture(std::size_t n, std::size_t depth) {
    csa::Rng rng(11);
    std::vector<std::string> ids;
    csa::MatrixF rows(n, 32);
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back("x" + std::to_string(i));
      double ss = 0.0;
      for (auto& v : rows.row(i)) {
        v = static_cast<float>(rng.normal());
        ss += double(v) * v;
      }
      for (auto& v : rows.row(i)) v = static_cast<float>(v / std::sqrt(ss));
    }
    embeddings = csa::EmbeddingMatrix(std::move(ids), std::move(rows));
    for (std::size_t q = 0; q < 8; ++q) {
      rankings.push_back(csa::knn_search(embeddings, embeddings.ids()[q * 97 % n], depth));
    }
  }
};

const Fixture& fixture() {
  static const Fixture f(4000, 1024);
  return f;
}

void BM_KnnSearch(benchmark::State& state) {
  const auto& f = fixture();
  std::size_t q = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(csa::knn_search(f.embeddings, f.embeddings.ids()[q++ % 4000], 1024));
  }
}
BENCHMARK(BM_KnnSearch)->Unit(benchmark::kMillisecond);

void BM_CsaRerank(benchmark::State& state) {
  const auto& f = fixture();
  csa::EncoderConfig c;
  c.heads = 4;
  c.head_dim = 32;
  c.hidden = 128;
  c.input_len = 64;
  csa::Rng rng(12);
  const auto params = csa::init_params<float>(c, rng);
  const auto k = static_cast<std::size_t>(state.range(0));
  std::size_t q = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        csa::csa_rerank(f.embeddings, f.rankings[q++ % f.rankings.size()], params, c, k, 64));
  }
}
BENCHMARK(BM_CsaRerank)->RangeMultiplier(2)->Range(128, 1024)->Unit(benchmark::kMillisecond);

void BM_QeRerank(benchmark::State& state) {
  const auto& f = fixture();
  const auto method = static_cast<csa::QeMethod>(state.range(0));
  csa::QeConfig config;
  std::size_t q = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        csa::qe_rerank(method, f.embeddings, f.rankings[q++ % f.rankings.size()], config, 512));
  }
  state.SetLabel(csa::method_tag(method));
}
BENCHMARK(BM_QeRerank)->DenseRange(0, 2)->Unit(benchmark::kMicrosecond);

void BM_DiffusionGraphBuild(benchmark::State& state) {
  const auto& f = fixture();
  csa::DiffusionConfig config;
  for (auto _ : state) benchmark::DoNotOptimize(csa::DiffusionIndex(f.embeddings, config));
}
BENCHMARK(BM_DiffusionGraphBuild)->Unit(benchmark::kMillisecond)->Iterations(1);

void BM_DiffusionRerank(benchmark::State& state) {
  const auto& f = fixture();
  static const csa::DiffusionIndex index(f.embeddings, csa::DiffusionConfig{});
  std::size_t q = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(index.rerank(f.rankings[q++ % f.rankings.size()], 512));
  }
}
BENCHMARK(BM_DiffusionRerank)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
