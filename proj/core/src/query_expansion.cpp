// SPDX-License-Identifier: Apache-2.0
#include "csa/query_expansion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "csa/search.hpp"

namespace csa {

namespace {

std::vector<std::size_t> neighbors(const RankingList& ranking, const EmbeddingMatrix& embeddings,
                                   std::size_t nqe) {
  std::vector<std::size_t> rows;
  for (const auto& e : ranking.entries) {
    if (rows.size() == nqe) break;
    if (e.id == ranking.query_id) continue;
    rows.push_back(embeddings.index_of(e.id));
  }
  return rows;
}

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

std::vector<float> weighted_sum(std::span<const float> query, const EmbeddingMatrix& embeddings,
                                const std::vector<std::size_t>& rows,
                                const std::vector<double>& weights) {
  if (query.size() != embeddings.dim()) {
    throw ShapeError("query has dimension " + std::to_string(query.size()) + ", database " +
                     std::to_string(embeddings.dim()));
  }
  std::vector<double> acc(query.begin(), query.end());
  for (std::size_t n = 0; n < rows.size(); ++n) {
    auto f = embeddings.row(rows[n]);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += weights[n] * f[i];
  }
  double ss = 0.0;
  for (double v : acc) ss += v * v;
  const double inv = ss > 0.0 ? 1.0 / std::sqrt(ss) : 0.0;
  std::vector<float> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] * inv);
  return out;
}

}  // namespace

std::vector<float> aqe(std::span<const float> query, const RankingList& ranking,
                       const EmbeddingMatrix& embeddings, std::size_t nqe) {
  const auto rows = neighbors(ranking, embeddings, nqe);
  return weighted_sum(query, embeddings, rows, std::vector<double>(rows.size(), 1.0));
}

std::vector<float> aqewd(std::span<const float> query, const RankingList& ranking,
                         const EmbeddingMatrix& embeddings, std::size_t nqe) {
  const auto rows = neighbors(ranking, embeddings, nqe);
  std::vector<double> w(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    w[i] = static_cast<double>(nqe - i) / static_cast<double>(nqe);
  }
  return weighted_sum(query, embeddings, rows, w);
}

std::vector<float> alpha_qe(std::span<const float> query, const RankingList& ranking,
                            const EmbeddingMatrix& embeddings, std::size_t nqe, double alpha) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha_qe: alpha must be >= 0");
  const auto rows = neighbors(ranking, embeddings, nqe);
  const double qnorm = std::sqrt(dot(query, query));
  std::vector<double> w(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double s = qnorm > 0.0 ? dot(query, embeddings.row(rows[i])) / qnorm : 0.0;
    w[i] = std::pow(std::max(s, 0.0), alpha);
  }
  return weighted_sum(query, embeddings, rows, w);
}

std::vector<float> expand_query(QeMethod method, std::span<const float> query,
                                const RankingList& ranking, const EmbeddingMatrix& embeddings,
                                const QeConfig& config) {
  switch (method) {
    case QeMethod::kAverage: return aqe(query, ranking, embeddings, config.nqe);
    case QeMethod::kWeightedDecay: return aqewd(query, ranking, embeddings, config.nqe);
    case QeMethod::kAlpha: return alpha_qe(query, ranking, embeddings, config.nqe, config.alpha);
  }
  throw std::invalid_argument("unknown query expansion method");
}

RankingList qe_second_round(std::span<const float> expanded, const EmbeddingMatrix& embeddings,
                            std::size_t k, const std::string& query_id) {
  return knn_search(embeddings, expanded, k, query_id);
}

RerankResult qe_rerank(QeMethod method, const EmbeddingMatrix& embeddings,
                       const RankingList& ranking, const QeConfig& config, std::size_t k) {
  const auto start = std::chrono::steady_clock::now();
  const auto query = embeddings.row(embeddings.index_of(ranking.query_id));
  const auto expanded = expand_query(method, query, ranking, embeddings, config);
  const std::size_t head = std::min(k, ranking.size());
  std::vector<double> scores(head);
  for (std::size_t i = 0; i < head; ++i) {
    scores[i] = dot(expanded, embeddings.row(embeddings.index_of(ranking.entries[i].id)));
  }
  RerankResult result;
  result.method = method_tag(method);
  result.reordered = head;
  result.ranking = reorder_head(ranking, head, scores);
  result.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return result;
}

const char* method_tag(QeMethod method) {
  switch (method) {
    case QeMethod::kAverage: return "aqe";
    case QeMethod::kWeightedDecay: return "aqewd";
    case QeMethod::kAlpha: return "alpha-qe";
  }
  return "?";
}

}  // namespace csa
