// SPDX-License-Identifier: Apache-2.0
#include "csa/metrics.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

namespace csa {

void validate_ground_truth(const GroundTruth& truth) {
  std::unordered_set<std::string> seen;
  for (const auto& q : truth) {
    if (!seen.insert(q.query_id).second) {
      throw std::invalid_argument("ground truth: duplicate query " + q.query_id);
    }
    std::unordered_set<std::string> pos(q.positives.begin(), q.positives.end());
    if (pos.contains(q.query_id)) {
      throw std::invalid_argument("ground truth: query " + q.query_id + " lists itself as positive");
    }
    for (const auto& id : q.ignore) {
      if (pos.contains(id)) {
        throw std::invalid_argument("ground truth: " + id + " is both positive and ignored for " +
                                    q.query_id);
      }
    }
  }
}

std::optional<double> average_precision(const RankingList& ranking, const QueryTruth& truth) {
  if (truth.positives.empty()) return std::nullopt;
  const std::unordered_set<std::string> pos(truth.positives.begin(), truth.positives.end());
  const std::unordered_set<std::string> ignore(truth.ignore.begin(), truth.ignore.end());

  double sum = 0.0;
  std::size_t rank = 0;
  std::size_t hits = 0;
  std::unordered_set<std::string> counted;
  for (const auto& e : ranking.entries) {
    if (e.id == truth.query_id || ignore.contains(e.id)) continue;
    ++rank;
    if (pos.contains(e.id) && counted.insert(e.id).second) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank);
    }
  }
  return sum / static_cast<double>(pos.size());
}

namespace {

std::string join_ids(const std::vector<std::string>& ids) {
  std::string s;
  const std::size_t shown = std::min<std::size_t>(ids.size(), 10);
  for (std::size_t i = 0; i < shown; ++i) {
    if (i > 0) s += ", ";
    s += ids[i];
  }
  if (ids.size() > shown) s += ", ... (" + std::to_string(ids.size()) + " total)";
  return s;
}

std::string mismatch_message(const std::vector<std::string>& missing,
                             const std::vector<std::string>& unexpected) {
  std::string msg = "rankings and ground truth cover different queries";
  if (!missing.empty()) msg += "; no ranking for: " + join_ids(missing);
  if (!unexpected.empty()) msg += "; not in ground truth: " + join_ids(unexpected);
  return msg;
}

}  // namespace

QueryMismatchError::QueryMismatchError(std::vector<std::string> missing,
                                       std::vector<std::string> unexpected)
    : std::runtime_error(mismatch_message(missing, unexpected)),
      missing_(std::move(missing)),
      unexpected_(std::move(unexpected)) {}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["method"] = method;
  j["map"] = map;
  j["evaluated"] = per_query.size();
  j["skipped"] = skipped;
  j["mean_latency_ms"] = mean_latency_ms ? nlohmann::json(*mean_latency_ms) : nlohmann::json();
  j["config"] = config;
  auto& rows = j["per_query"] = nlohmann::json::array();
  for (const auto& q : per_query) rows.push_back({{"query", q.query_id}, {"ap", q.ap}});
  return j;
}

EvalReport mean_average_precision(std::span<const RankingList> rankings, const GroundTruth& truth,
                                  std::string method) {
  std::unordered_map<std::string, const RankingList*> by_query;
  std::vector<std::string> unexpected;
  std::unordered_set<std::string> truth_ids;
  for (const auto& q : truth) truth_ids.insert(q.query_id);
  for (const auto& r : rankings) {
    if (!truth_ids.contains(r.query_id)) {
      unexpected.push_back(r.query_id);
    } else {
      by_query[r.query_id] = &r;
    }
  }
  std::vector<std::string> missing;
  for (const auto& q : truth) {
    if (!by_query.contains(q.query_id)) missing.push_back(q.query_id);
  }
  if (!missing.empty() || !unexpected.empty()) {
    throw QueryMismatchError(std::move(missing), std::move(unexpected));
  }

  EvalReport report;
  report.method = std::move(method);
  for (const auto& q : truth) {
    auto ap = average_precision(*by_query.at(q.query_id), q);
    if (ap) {
      report.per_query.push_back({q.query_id, *ap});
    } else {
      report.skipped.push_back(q.query_id);
    }
  }
  if (report.per_query.empty()) {
    throw std::runtime_error("mAP undefined: all " + std::to_string(truth.size()) +
                             " queries have no positives");
  }
  std::vector<double> aps;
  aps.reserve(report.per_query.size());
  for (const auto& q : report.per_query) aps.push_back(q.ap);
  std::sort(aps.begin(), aps.end());
  double sum = 0.0;
  for (double a : aps) sum += a;
  report.map = sum / static_cast<double>(aps.size());
  return report;
}

}  // namespace csa
