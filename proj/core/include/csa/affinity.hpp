// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "csa/embeddings.hpp"
#include "csa/matrix.hpp"

namespace csa {

/// Candidate-vs-anchor cosine similarities for one query.
///
/// values is always K x L. When the ranking is shorter than K (or L) the
/// trailing rows (columns) are zero and row_valid marks the real rows.
struct AffinitySequence {
  std::string query_id;
  std::vector<std::string> candidate_ids;  // valid rows only
  std::vector<std::string> anchor_ids;     // valid columns only
  MatrixF values;
  std::vector<bool> row_valid;
  bool clamped = false;  // K or L exceeded the ranking length

  std::size_t rows() const noexcept { return values.rows(); }
  std::size_t valid_rows() const noexcept { return candidate_ids.size(); }
};

/// Moves (or inserts with score 1.0) the query to position 0. The list
/// never grows: an insertion drops the last entry.
RankingList ensure_query_first(RankingList ranking, const std::string& query_id);

/// values[i][j] = <f_{r_i}, f_{r_j}> for the first K candidates and the first
/// L entries of the same ranking as anchors. Expects a query-first ranking.
AffinitySequence build_affinity_sequence(const EmbeddingMatrix& embeddings,
                                         const RankingList& ranking, std::size_t k,
                                         std::size_t l);

/// Cluster label per id; negative labels never match anything.
using LabelMap = std::unordered_map<std::string, std::int64_t>;

struct TrainingSample {
  AffinitySequence sequence;
  std::vector<bool> relevant;       // per row; row 0 is the query itself
  std::size_t total_positives = 0;  // positives for this query in the whole database
  std::size_t view = 0;             // index of the feature set it came from
};

struct SampleBuildReport {
  std::size_t emitted = 0;
  std::size_t skipped_missing_id = 0;
};

/// One sample per (feature set, query): exact top-K retrieval, query moved
/// to the front, affinity over the top-L anchors, and a same-label mask.
/// Output is ordered feature set major, query minor.
std::vector<TrainingSample> build_training_samples(std::span<const EmbeddingMatrix> feature_sets,
                                                   const LabelMap& labels,
                                                   std::span<const std::string> queries,
                                                   std::size_t k, std::size_t l,
                                                   SampleBuildReport* report = nullptr,
                                                   std::size_t threads = 1);

/// Number of relevant rows in positions 1..K-1 (the query row excluded).
std::size_t positives_after_query(const TrainingSample& sample);

}  // namespace csa
