// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csa/embeddings.hpp"

namespace csa {

struct QueryTruth {
  std::string query_id;
  std::vector<std::string> positives;
  std::vector<std::string> ignore;

  friend bool operator==(const QueryTruth&, const QueryTruth&) = default;
};

using GroundTruth = std::vector<QueryTruth>;

/// Throws std::invalid_argument if a query lists itself as a positive, an id
/// is both positive and ignored, or a query id repeats.
void validate_ground_truth(const GroundTruth& truth);

/// AP after dropping the query's own entry and the ignore set. nullopt when
/// the query has no positives.
std::optional<double> average_precision(const RankingList& ranking, const QueryTruth& truth);

class QueryMismatchError : public std::runtime_error {
 public:
  QueryMismatchError(std::vector<std::string> missing, std::vector<std::string> unexpected);

  const std::vector<std::string>& missing() const noexcept { return missing_; }
  const std::vector<std::string>& unexpected() const noexcept { return unexpected_; }

 private:
  std::vector<std::string> missing_;     // in truth, no ranking
  std::vector<std::string> unexpected_;  // ranked, not in truth
};

struct QueryAp {
  std::string query_id;
  double ap = 0.0;
};

struct EvalReport {
  std::string method;
  double map = 0.0;
  std::vector<QueryAp> per_query;  // truth order, evaluated queries only
  std::vector<std::string> skipped;
  std::optional<double> mean_latency_ms;
  nlohmann::json config = nlohmann::json::object();

  nlohmann::json to_json() const;
};

/// Rankings and truth must name the same queries (QueryMismatchError
/// otherwise). Throws std::runtime_error if every query is skipped.
EvalReport mean_average_precision(std::span<const RankingList> rankings, const GroundTruth& truth,
                                  std::string method = {});

}  // namespace csa
