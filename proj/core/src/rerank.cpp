// SPDX-License-Identifier: Apache-2.0
#include "csa/rerank.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include "csa/affinity.hpp"
#include "csa/losses.hpp"

namespace csa {

RankingList reorder_head(const RankingList& ranking, std::size_t k,
                         std::span<const double> scores) {
  const std::size_t head = std::min(k, ranking.size());
  if (scores.size() != head) {
    throw std::invalid_argument("reorder_head: " + std::to_string(scores.size()) +
                                " scores for a head of " + std::to_string(head));
  }
  std::vector<std::size_t> order(head);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RankingList out;
  out.query_id = ranking.query_id;
  out.entries.reserve(ranking.size());
  for (std::size_t i : order) out.entries.push_back({ranking.entries[i].id, scores[i]});
  out.entries.insert(out.entries.end(), ranking.entries.begin() + static_cast<std::ptrdiff_t>(head),
                     ranking.entries.end());
  return out;
}

RerankResult csa_rerank(const EmbeddingMatrix& embeddings, const RankingList& ranking,
                        const EncoderParams<float>& params, const EncoderConfig& config,
                        std::size_t k, std::size_t l) {
  const auto start = std::chrono::steady_clock::now();
  if (l != config.input_len || params.proj_weight.rows() != l) {
    throw ConfigError("csa_rerank: L=" + std::to_string(l) + " but the model expects " +
                      std::to_string(params.proj_weight.rows()));
  }
  RerankResult result;
  result.method = "csa";
  const std::size_t head = std::min(k, ranking.size());
  result.reordered = head;
  if (head <= 1) {
    result.ranking = ranking;
    result.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return result;
  }

  // seq: the head with the query at row 0; pos[i] = row of head entry i.
  RankingList seq;
  seq.query_id = ranking.query_id;
  std::vector<std::size_t> pos(head);
  const auto qpos = ranking.position_of(ranking.query_id);
  if (qpos && *qpos < head) {
    seq.entries.push_back(ranking.entries[*qpos]);
    for (std::size_t i = 0; i < head; ++i) {
      if (i == *qpos) {
        pos[i] = 0;
      } else {
        pos[i] = seq.entries.size();
        seq.entries.push_back(ranking.entries[i]);
      }
    }
  } else {
    seq.entries.push_back({ranking.query_id, 1.0});
    for (std::size_t i = 0; i < head; ++i) {
      pos[i] = seq.entries.size();
      seq.entries.push_back(ranking.entries[i]);
    }
  }

  const AffinitySequence affinity = build_affinity_sequence(embeddings, seq, seq.size(), l);
  EncoderTape<float> pass(params, config);
  const MatrixF& refined = pass.forward(affinity.values, affinity.row_valid);

  std::vector<double> scores(head);
  for (std::size_t i = 0; i < head; ++i) scores[i] = row_cosine(refined, 0, pos[i]);
  result.ranking = reorder_head(ranking, head, scores);
  result.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace csa
