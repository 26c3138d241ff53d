// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "csa/embeddings.hpp"
#include "csa/rerank.hpp"

namespace csa {

enum class QeMethod { kAverage, kWeightedDecay, kAlpha };

struct QeConfig {
  std::size_t nqe = 10;
  double alpha = 3.0;
};

/// Expanded query vectors. Neighbors are the first nQE ranked ids other than
/// the query itself (fewer if the ranking is short); the query has weight 1.
/// Results are unit-norm.
std::vector<float> aqe(std::span<const float> query, const RankingList& ranking,
                       const EmbeddingMatrix& embeddings, std::size_t nqe);
/// Neighbor i (0-based) weighs (nQE - i) / nQE.
std::vector<float> aqewd(std::span<const float> query, const RankingList& ranking,
                         const EmbeddingMatrix& embeddings, std::size_t nqe);
/// Neighbor weighs max(cos(q, f_i), 0)^alpha.
std::vector<float> alpha_qe(std::span<const float> query, const RankingList& ranking,
                            const EmbeddingMatrix& embeddings, std::size_t nqe, double alpha);

std::vector<float> expand_query(QeMethod method, std::span<const float> query,
                                const RankingList& ranking, const EmbeddingMatrix& embeddings,
                                const QeConfig& config);

/// Exact top-K search with the expanded vector.
RankingList qe_second_round(std::span<const float> expanded, const EmbeddingMatrix& embeddings,
                            std::size_t k, const std::string& query_id = {});

/// Re-scores the top-K of `ranking` by cosine with the expanded query. The
/// query vector is the database row of ranking.query_id.
RerankResult qe_rerank(QeMethod method, const EmbeddingMatrix& embeddings,
                       const RankingList& ranking, const QeConfig& config, std::size_t k);

const char* method_tag(QeMethod method);

}  // namespace csa
