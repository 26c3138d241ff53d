// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "csa/embeddings.hpp"

namespace csa {

/// Exact cosine top-K by full scan for a database item used as query.
/// Descending score; ties broken by id. Unknown ids throw std::out_of_range.
RankingList knn_search(const EmbeddingMatrix& embeddings, const std::string& query_id,
                       std::size_t k);

/// Same, for an arbitrary query vector (already unit norm).
RankingList knn_search(const EmbeddingMatrix& embeddings, std::span<const float> query,
                       std::size_t k, std::string query_id = {});

}  // namespace csa
