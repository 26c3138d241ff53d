// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "csa/matrix.hpp"

namespace csa {

/// kSum: plain sum over valid rows and columns. kMean: the same divided by
/// (valid rows x columns).
enum class MseReduction { kSum, kMean };

struct LossConfig {
  double temperature = 2.0;
  double lambda = 0.2;  // weight of the reconstruction term
  MseReduction mse_reduction = MseReduction::kMean;

  void validate() const;
};

template <typename T>
struct LossValue {
  double loss = 0.0;
  Matrix<T> gradient;  // same shape as the differentiated input
};

/// Cosine similarity of two rows; zero rows give 0.
template <typename T>
double row_cosine(const Matrix<T>& m, std::size_t a, std::size_t b);

/// -log( sum_{relevant i>=1} exp(cos(y_0, y_i)/tau) / sum_{i>=1} exp(cos(y_0, y_i)/tau) )
/// over rows with valid[i]. Row 0 is the query and never counts as a
/// candidate. Returns nullopt when no candidate is relevant.
template <typename T>
std::optional<LossValue<T>> contrastive_loss(const Matrix<T>& refined,
                                             const std::vector<bool>& relevant,
                                             const std::vector<bool>& valid, double temperature);

/// Sum over valid rows of ||original_i - reconstructed_i||^2; gradient is
/// with respect to `reconstructed`.
template <typename T>
LossValue<T> mse_loss(const Matrix<T>& original, const Matrix<T>& reconstructed,
                      const std::vector<bool>& valid, MseReduction reduction = MseReduction::kSum);

/// contrastive + lambda * mse.
inline double total_loss(double contrastive, double mse, double lambda) {
  return contrastive + lambda * mse;
}

}  // namespace csa
