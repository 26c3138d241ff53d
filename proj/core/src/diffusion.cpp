// SPDX-License-Identifier: Apache-2.0
#include "csa/diffusion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "csa/parallel.hpp"

namespace csa {

void DiffusionConfig::validate() const {
  if (k_graph < 1) throw std::invalid_argument("diffusion: k_graph must be >= 1");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("diffusion: alpha must be in [0, 1)");
  if (!(cg_tol > 0.0)) throw std::invalid_argument("diffusion: cg_tol must be > 0");
}

void SparseMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p) s += values[p] * x[cols[p]];
    y[r] = s;
  }
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  const auto begin = cols.begin() + static_cast<std::ptrdiff_t>(row_ptr[r]);
  const auto end = cols.begin() + static_cast<std::ptrdiff_t>(row_ptr[r + 1]);
  auto it = std::lower_bound(begin, end, static_cast<std::uint32_t>(c));
  return it != end && *it == c ? values[static_cast<std::size_t>(it - cols.begin())] : 0.0;
}

SparseMatrix build_mutual_knn_graph(const EmbeddingMatrix& embeddings, std::size_t k_graph,
                                    std::size_t threads) {
  const std::size_t n = embeddings.size();
  const std::size_t k = std::min(k_graph, n == 0 ? 0 : n - 1);
  // Sorted neighbor lists, self excluded; ties by index.
  std::vector<std::vector<std::uint32_t>> nn(n);
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end, std::size_t) {
    std::vector<std::pair<float, std::uint32_t>> scored(n);
    for (std::size_t i = begin; i < end; ++i) {
      scored.clear();
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) scored.emplace_back(embeddings.similarity(i, j), static_cast<std::uint32_t>(j));
      }
      std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                        [](const auto& a, const auto& b) {
                          return a.first > b.first || (a.first == b.first && a.second < b.second);
                        });
      nn[i].reserve(k);
      for (std::size_t t = 0; t < k; ++t) nn[i].push_back(scored[t].second);
      std::sort(nn[i].begin(), nn[i].end());
    }
  });

  SparseMatrix w;
  w.n = n;
  w.row_ptr.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint32_t j : nn[i]) {
      if (!std::binary_search(nn[j].begin(), nn[j].end(), static_cast<std::uint32_t>(i))) continue;
      const double s = std::max(0.0, static_cast<double>(embeddings.similarity(i, j)));
      if (s == 0.0) continue;
      w.cols.push_back(j);
      w.values.push_back(s);
    }
    w.row_ptr[i + 1] = w.cols.size();
  }
  return w;
}

SparseMatrix normalize_graph(const SparseMatrix& w) {
  std::vector<double> inv_sqrt(w.n, 0.0);
  for (std::size_t r = 0; r < w.n; ++r) {
    double d = 0.0;
    for (std::size_t p = w.row_ptr[r]; p < w.row_ptr[r + 1]; ++p) d += w.values[p];
    if (d > 0.0) inv_sqrt[r] = 1.0 / std::sqrt(d);
  }
  SparseMatrix s = w;
  for (std::size_t r = 0; r < w.n; ++r) {
    for (std::size_t p = w.row_ptr[r]; p < w.row_ptr[r + 1]; ++p) {
      s.values[p] = w.values[p] * inv_sqrt[r] * inv_sqrt[w.cols[p]];
    }
  }
  return s;
}

CgResult solve_diffusion(const SparseMatrix& s, double alpha, std::span<const double> b,
                         double tol, std::size_t max_iter) {
  const std::size_t n = s.n;
  if (b.size() != n) throw std::invalid_argument("solve_diffusion: rhs length mismatch");
  auto apply = [&](std::span<const double> x, std::span<double> y) {
    s.multiply(x, y);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - alpha * y[i];
  };
  auto dot = [](std::span<const double> a, std::span<const double> c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * c[i];
    return acc;
  };

  CgResult out;
  out.x.assign(n, 0.0);
  std::vector<double> r(b.begin(), b.end());
  std::vector<double> p = r;
  std::vector<double> ap(n);
  double rr = dot(r, r);
  out.residual = std::sqrt(rr);
  while (out.residual > tol && out.iterations < max_iter) {
    apply(p, ap);
    const double pap = dot(p, ap);
    if (pap <= 0.0) break;
    const double step = rr / pap;
    for (std::size_t i = 0; i < n; ++i) {
      out.x[i] += step * p[i];
      r[i] -= step * ap[i];
    }
    const double rr_next = dot(r, r);
    const double beta = rr_next / rr;
    rr = rr_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    ++out.iterations;
    out.residual = std::sqrt(rr);
  }
  apply(out.x, ap);
  double true_rr = 0.0;
  for (std::size_t i = 0; i < n; ++i) true_rr += (b[i] - ap[i]) * (b[i] - ap[i]);
  out.residual = std::sqrt(true_rr);
  out.converged = out.residual <= tol;
  return out;
}

DiffusionIndex::DiffusionIndex(const EmbeddingMatrix& embeddings, const DiffusionConfig& config,
                               std::size_t threads)
    : embeddings_(embeddings), config_(config) {
  config_.validate();
  s_ = normalize_graph(build_mutual_knn_graph(embeddings, config_.k_graph, threads));
}

RerankResult DiffusionIndex::rerank(const RankingList& ranking, std::size_t k) const {
  const auto start = std::chrono::steady_clock::now();
  RerankResult result;
  result.method = "dfs";
  const std::size_t head = std::min(k, ranking.size());
  result.reordered = head;
  if (head == 0) {
    result.ranking = ranking;
    return result;
  }
  auto seed = embeddings_.find(ranking.query_id);
  if (!seed) seed = embeddings_.index_of(ranking.entries.front().id);
  std::vector<double> y(s_.n, 0.0);
  y[*seed] = 1.0;
  const CgResult cg = solve_diffusion(s_, config_.alpha, y, config_.cg_tol, config_.cg_max_iter);
  std::vector<double> scores(head);
  for (std::size_t i = 0; i < head; ++i) {
    scores[i] = cg.x[embeddings_.index_of(ranking.entries[i].id)];
  }
  result.ranking = reorder_head(ranking, head, scores);
  result.converged = cg.converged;
  result.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace csa
