// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "csa/embeddings.hpp"
#include "csa/rerank.hpp"

namespace csa {

struct DiffusionConfig {
  std::size_t k_graph = 50;
  double alpha = 0.99;
  double cg_tol = 1e-8;
  std::size_t cg_max_iter = 100;

  /// Requires 0 <= alpha < 1, k_graph >= 1, cg_tol > 0.
  void validate() const;
};

/// Symmetric sparse matrix in CSR form.
struct SparseMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::uint32_t> cols;
  std::vector<double> values;

  void multiply(std::span<const double> x, std::span<double> y) const;
  double at(std::size_t r, std::size_t c) const;
  std::size_t nonzeros() const noexcept { return values.size(); }
};

/// Mutual kNN graph: W_ij = max(cos(i, j), 0) when i and j are each in the
/// other's k nearest neighbors (self excluded), else 0.
SparseMatrix build_mutual_knn_graph(const EmbeddingMatrix& embeddings, std::size_t k_graph,
                                    std::size_t threads = 1);

/// D^{-1/2} W D^{-1/2}; rows of isolated nodes stay empty.
SparseMatrix normalize_graph(const SparseMatrix& w);

struct CgResult {
  std::vector<double> x;
  std::size_t iterations = 0;
  double residual = 0.0;  // ||b - A x||_2
  bool converged = false;
};

/// Conjugate gradient on (I - alpha * S) x = b from x = 0.
CgResult solve_diffusion(const SparseMatrix& s, double alpha, std::span<const double> b,
                         double tol, std::size_t max_iter);

/// Global diffusion over the whole database; the normalized graph is built
/// once and reused for every query.
class DiffusionIndex {
 public:
  DiffusionIndex(const EmbeddingMatrix& embeddings, const DiffusionConfig& config,
                 std::size_t threads = 1);

  const SparseMatrix& graph() const noexcept { return s_; }
  const DiffusionConfig& config() const noexcept { return config_; }

  /// Mass 1 on the query's node (on the top-ranked entry if the query is not
  /// a database item), then reorders the top-K by diffused score.
  RerankResult rerank(const RankingList& ranking, std::size_t k) const;

 private:
  const EmbeddingMatrix& embeddings_;
  DiffusionConfig config_;
  SparseMatrix s_;
};

}  // namespace csa
