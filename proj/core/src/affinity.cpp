// SPDX-License-Identifier: Apache-2.0
#include "csa/affinity.hpp"

#include <algorithm>

#include "csa/parallel.hpp"
#include "csa/search.hpp"

namespace csa {

RankingList ensure_query_first(RankingList ranking, const std::string& query_id) {
  auto& e = ranking.entries;
  ranking.query_id = query_id;
  if (auto pos = ranking.position_of(query_id)) {
    if (*pos != 0) {
      std::rotate(e.begin(), e.begin() + static_cast<std::ptrdiff_t>(*pos),
                  e.begin() + static_cast<std::ptrdiff_t>(*pos) + 1);
    }
    return ranking;
  }
  const std::size_t length = e.size();
  e.insert(e.begin(), RankEntry{query_id, 1.0});
  if (length > 0) e.resize(length);
  return ranking;
}

AffinitySequence build_affinity_sequence(const EmbeddingMatrix& embeddings,
                                         const RankingList& ranking, std::size_t k,
                                         std::size_t l) {
  const std::size_t n = ranking.size();
  const std::size_t rows = std::min(k, n);
  const std::size_t cols = std::min(l, n);

  AffinitySequence seq;
  seq.query_id = ranking.query_id;
  seq.clamped = rows < k || cols < l;
  seq.values = MatrixF(k, l);
  seq.row_valid.assign(k, false);

  std::vector<std::size_t> index(std::max(rows, cols));
  for (std::size_t i = 0; i < index.size(); ++i) {
    index[i] = embeddings.index_of(ranking.entries[i].id);
  }
  seq.candidate_ids.reserve(rows);
  for (std::size_t i = 0; i < rows; ++i) seq.candidate_ids.push_back(ranking.entries[i].id);
  seq.anchor_ids.reserve(cols);
  for (std::size_t j = 0; j < cols; ++j) seq.anchor_ids.push_back(ranking.entries[j].id);

  for (std::size_t i = 0; i < rows; ++i) {
    seq.row_valid[i] = true;
    auto dst = seq.values.row(i);
    for (std::size_t j = 0; j < cols; ++j) {
      dst[j] = embeddings.similarity(index[i], index[j]);
    }
  }
  return seq;
}

std::vector<TrainingSample> build_training_samples(std::span<const EmbeddingMatrix> feature_sets,
                                                   const LabelMap& labels,
                                                   std::span<const std::string> queries,
                                                   std::size_t k, std::size_t l,
                                                   SampleBuildReport* report,
                                                   std::size_t threads) {
  const std::size_t depth = std::max(k, l);
  std::vector<std::optional<TrainingSample>> slots(feature_sets.size() * queries.size());

  auto label_of = [&](const std::string& id) -> std::int64_t {
    auto it = labels.find(id);
    return it == labels.end() ? -1 : it->second;
  };
  // Positive counts depend only on labels and the id universe of each set.
  std::vector<std::unordered_map<std::int64_t, std::size_t>> cluster_sizes(feature_sets.size());
  for (std::size_t v = 0; v < feature_sets.size(); ++v) {
    for (const auto& id : feature_sets[v].ids()) {
      const auto lab = label_of(id);
      if (lab >= 0) ++cluster_sizes[v][lab];
    }
  }

  parallel_for(slots.size(), threads, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t s = begin; s < end; ++s) {
      const std::size_t v = s / queries.size();
      const std::string& q = queries[s % queries.size()];
      const EmbeddingMatrix& emb = feature_sets[v];
      if (!emb.contains(q)) continue;
      bool complete = true;
      for (const auto& other : feature_sets) complete = complete && other.contains(q);
      if (!complete) continue;

      RankingList ranking = ensure_query_first(knn_search(emb, q, depth), q);
      TrainingSample sample;
      sample.sequence = build_affinity_sequence(emb, ranking, k, l);
      sample.view = v;
      const auto q_label = label_of(q);
      sample.relevant.assign(sample.sequence.rows(), false);
      for (std::size_t i = 0; i < sample.sequence.valid_rows(); ++i) {
        const auto lab = label_of(sample.sequence.candidate_ids[i]);
        sample.relevant[i] = q_label >= 0 && lab == q_label;
      }
      if (q_label >= 0) {
        auto it = cluster_sizes[v].find(q_label);
        sample.total_positives = it == cluster_sizes[v].end() ? 0 : it->second - 1;
      }
      slots[s] = std::move(sample);
    }
  });

  std::vector<TrainingSample> out;
  out.reserve(slots.size());
  SampleBuildReport local;
  for (auto& slot : slots) {
    if (slot) {
      out.push_back(std::move(*slot));
      ++local.emitted;
    } else {
      ++local.skipped_missing_id;
    }
  }
  if (report != nullptr) *report = local;
  return out;
}

std::size_t positives_after_query(const TrainingSample& sample) {
  std::size_t count = 0;
  for (std::size_t i = 1; i < sample.relevant.size(); ++i) {
    if (sample.relevant[i] && sample.sequence.row_valid[i]) ++count;
  }
  return count;
}

}  // namespace csa
