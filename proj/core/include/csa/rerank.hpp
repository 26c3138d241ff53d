// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "csa/embeddings.hpp"
#include "csa/encoder.hpp"

namespace csa {

struct RerankResult {
  RankingList ranking;  // reordered head followed by the untouched tail
  std::string method;
  double latency_ms = 0.0;
  std::size_t reordered = 0;  // head length actually reordered
  bool converged = true;      // false when an iterative solver stopped early
};

/// Stable descending sort of the first min(k, n) entries by `scores`
/// (one per head entry), which become the new entry scores. Ties keep the
/// original order; the tail is copied as is.
RankingList reorder_head(const RankingList& ranking, std::size_t k,
                         std::span<const double> scores);

/// Refined-feature re-ranking of the top-K. The sequence fed to the encoder
/// always starts with the query: it is moved to the front if ranked, and
/// prepended (K+1 rows) if absent, in which case it stays out of the output.
/// Anchors are the first L entries of that sequence. Throws ConfigError if
/// l differs from the model's input length.
RerankResult csa_rerank(const EmbeddingMatrix& embeddings, const RankingList& ranking,
                        const EncoderParams<float>& params, const EncoderConfig& config,
                        std::size_t k, std::size_t l);

}  // namespace csa
