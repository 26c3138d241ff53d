// SPDX-License-Identifier: Apache-2.0
#include "csa/embeddings.hpp"

#include <cmath>
#include <stdexcept>

namespace csa {

EmbeddingMatrix::EmbeddingMatrix(std::vector<std::string> ids, MatrixF rows)
    : ids_(std::move(ids)), rows_(std::move(rows)) {
  if (ids_.size() != rows_.rows()) {
    throw ShapeError("EmbeddingMatrix: " + std::to_string(ids_.size()) + " ids for " +
                     rows_.shape() + " rows");
  }
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      throw std::invalid_argument("EmbeddingMatrix: duplicate id '" + ids_[i] + "'");
    }
  }
  for (std::size_t r = 0; r < rows_.rows(); ++r) {
    auto row = rows_.row(r);
    double ss = 0.0;
    for (float v : row) ss += static_cast<double>(v) * v;
    if (ss == 0.0) continue;
    const double norm = std::sqrt(ss);
    if (std::abs(norm - 1.0) <= 1e-5) continue;
    for (auto& v : row) v = static_cast<float>(v / norm);
  }
}

std::optional<std::size_t> EmbeddingMatrix::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingMatrix::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw std::out_of_range("unknown id '" + id + "'");
  return it->second;
}

float EmbeddingMatrix::similarity(std::size_t a, std::size_t b) const noexcept {
  auto ra = rows_.row(a);
  auto rb = rows_.row(b);
  // Four independent partial sums; the order is symmetric in (a, b).
  float s0 = 0.0F, s1 = 0.0F, s2 = 0.0F, s3 = 0.0F;
  std::size_t i = 0;
  for (; i + 4 <= ra.size(); i += 4) {
    s0 += ra[i] * rb[i];
    s1 += ra[i + 1] * rb[i + 1];
    s2 += ra[i + 2] * rb[i + 2];
    s3 += ra[i + 3] * rb[i + 3];
  }
  for (; i < ra.size(); ++i) s0 += ra[i] * rb[i];
  return (s0 + s1) + (s2 + s3);
}

std::optional<std::size_t> RankingList::position_of(const std::string& id) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].id == id) return i;
  }
  return std::nullopt;
}

}  // namespace csa
