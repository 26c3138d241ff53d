// SPDX-License-Identifier: Apache-2.0
#include "csa/search.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace csa {

RankingList knn_search(const EmbeddingMatrix& embeddings, std::span<const float> query,
                       std::size_t k, std::string query_id) {
  if (query.size() != embeddings.dim()) {
    throw ShapeError("knn_search: query dim " + std::to_string(query.size()) + " vs database dim " +
                     std::to_string(embeddings.dim()));
  }
  const std::size_t n = embeddings.size();
  std::vector<float> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = embeddings.row(i);
    float s0 = 0.0F, s1 = 0.0F, s2 = 0.0F, s3 = 0.0F;
    std::size_t j = 0;
    for (; j + 4 <= row.size(); j += 4) {
      s0 += row[j] * query[j];
      s1 += row[j + 1] * query[j + 1];
      s2 += row[j + 2] * query[j + 2];
      s3 += row[j + 3] * query[j + 3];
    }
    for (; j < row.size(); ++j) s0 += row[j] * query[j];
    scores[i] = (s0 + s1) + (s2 + s3);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto& ids = embeddings.ids();
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  };
  const std::size_t top = std::min(k, n);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                    better);
  RankingList out;
  out.query_id = std::move(query_id);
  out.entries.reserve(top);
  for (std::size_t i = 0; i < top; ++i) {
    out.entries.push_back({ids[order[i]], static_cast<double>(scores[order[i]])});
  }
  return out;
}

RankingList knn_search(const EmbeddingMatrix& embeddings, const std::string& query_id,
                       std::size_t k) {
  const std::size_t q = embeddings.index_of(query_id);
  return knn_search(embeddings, embeddings.row(q), k, query_id);
}

}  // namespace csa
