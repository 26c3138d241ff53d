// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "csa/matrix.hpp"

namespace csa {

/// N x d unit-norm feature vectors with their string ids.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  /// Rows whose norm is off by more than 1e-5 are re-normalized; zero rows
  /// are kept. ids must be unique.
  EmbeddingMatrix(std::vector<std::string> ids, MatrixF rows);

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return rows_.cols(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const MatrixF& rows() const noexcept { return rows_; }
  std::span<const float> row(std::size_t index) const noexcept { return rows_.row(index); }

  std::optional<std::size_t> find(const std::string& id) const;
  /// Throws std::out_of_range for unknown ids.
  std::size_t index_of(const std::string& id) const;
  bool contains(const std::string& id) const { return find(id).has_value(); }

  /// Dot product of two rows.
  float similarity(std::size_t a, std::size_t b) const noexcept;

 private:
  std::vector<std::string> ids_;
  MatrixF rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct RankEntry {
  std::string id;
  double score = 0.0;

  friend bool operator==(const RankEntry&, const RankEntry&) = default;
};

/// Ordered retrieval result for one query, best first.
struct RankingList {
  std::string query_id;
  std::vector<RankEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }
  /// Position of `id`, if present.
  std::optional<std::size_t> position_of(const std::string& id) const;

  friend bool operator==(const RankingList&, const RankingList&) = default;
};

}  // namespace csa
