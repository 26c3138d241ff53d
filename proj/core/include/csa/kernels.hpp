// SPDX-License-Identifier: Apache-2.0
//
// Dense kernels and their adjoint rules. All functions are pure: inputs are
// never modified and results are freshly allocated. Instantiated for float
// (storage precision) and double (gradient checks).
#pragma once

#include <cstddef>
#include <vector>

#include "csa/matrix.hpp"

namespace csa {

inline constexpr double kLayerNormEps = 1e-5;

// ---------------------------------------------------------------------------
// Products. Summation order is fixed for a given build and host.

/// a * b.
template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b);

/// a * b^T.
template <typename T>
Matrix<T> matmul_bt(const Matrix<T>& a, const Matrix<T>& b);

/// a^T * b.
template <typename T>
Matrix<T> matmul_at(const Matrix<T>& a, const Matrix<T>& b);

/// out += a * b (shapes must already agree).
template <typename T>
void matmul_accumulate(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out);
template <typename T>
void matmul_bt_accumulate(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out);
template <typename T>
void matmul_at_accumulate(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out);

template <typename T>
Matrix<T> transpose(const Matrix<T>& m);

// ---------------------------------------------------------------------------
// Elementwise and broadcast helpers.

template <typename T>
Matrix<T> add(const Matrix<T>& a, const Matrix<T>& b);

/// out += a.
template <typename T>
void add_inplace(Matrix<T>& out, const Matrix<T>& a);

/// m + broadcast of a 1 x cols row vector.
template <typename T>
Matrix<T> add_row_vector(const Matrix<T>& m, const Matrix<T>& row);

/// 1 x cols column sums.
template <typename T>
Matrix<T> column_sums(const Matrix<T>& m);

template <typename T>
Matrix<T> scale(const Matrix<T>& m, T factor);

// ---------------------------------------------------------------------------
// Row-wise nonlinearities.

/// Row softmax with max subtraction.
template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& m);

/// Adjoint of softmax_rows given its output y and upstream dy.
template <typename T>
Matrix<T> softmax_rows_backward(const Matrix<T>& y, const Matrix<T>& dy);

/// Per-row statistics kept by layer_norm_rows for its adjoint.
template <typename T>
struct LayerNormCache {
  Matrix<T> normalized;      // (x - mean) * inv_std, before the affine map
  std::vector<T> inv_std;    // one per row
};

/// Per-row standardization followed by gain * x + bias. gain and bias are
/// 1 x cols.
template <typename T>
Matrix<T> layer_norm_rows(const Matrix<T>& m, const Matrix<T>& gain, const Matrix<T>& bias,
                          T eps = static_cast<T>(kLayerNormEps),
                          LayerNormCache<T>* cache = nullptr);

template <typename T>
struct LayerNormGrads {
  Matrix<T> input;
  Matrix<T> gain;
  Matrix<T> bias;
};

template <typename T>
LayerNormGrads<T> layer_norm_rows_backward(const LayerNormCache<T>& cache,
                                           const Matrix<T>& gain, const Matrix<T>& dy);

/// GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <typename T>
T gelu(T x);
template <typename T>
T gelu_derivative(T x);

template <typename T>
Matrix<T> gelu(const Matrix<T>& m);

/// Adjoint of elementwise GELU given its input x.
template <typename T>
Matrix<T> gelu_backward(const Matrix<T>& x, const Matrix<T>& dy);

/// Scales each nonzero row to unit L2 norm. Zero rows are returned unchanged
/// and their indices appended to zero_rows when provided.
template <typename T>
Matrix<T> l2_normalize_rows(const Matrix<T>& m, std::vector<std::size_t>* zero_rows = nullptr);

/// Adjoint of l2_normalize_rows given input x and upstream dy. Zero rows
/// receive a zero gradient.
template <typename T>
Matrix<T> l2_normalize_rows_backward(const Matrix<T>& x, const Matrix<T>& dy);

}  // namespace csa
