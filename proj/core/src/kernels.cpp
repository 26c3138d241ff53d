// SPDX-License-Identifier: Apache-2.0
#include "csa/kernels.hpp"

#include <Eigen/Core>
#include <cmath>

namespace csa {
namespace {

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<const RowMajor<T>> view(const Matrix<T>& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

template <typename T>
Eigen::Map<RowMajor<T>> view(Matrix<T>& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

[[noreturn]] void shape_fail(const char* op, const std::string& a, const std::string& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a + " and " + b);
}

template <typename T>
void require_same(const char* op, const Matrix<T>& a, const Matrix<T>& b) {
  if (!a.same_shape(b)) shape_fail(op, a.shape(), b.shape());
}

template <typename T>
void require_row_vector(const char* op, const Matrix<T>& m, const Matrix<T>& v) {
  if (v.rows() != 1 || v.cols() != m.cols()) shape_fail(op, m.shape(), v.shape());
}

}  // namespace

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) shape_fail("matmul", a.shape(), b.shape());
  Matrix<T> out(a.rows(), b.cols());
  if (!out.empty() && a.cols() > 0) view(out).noalias() = view(a) * view(b);
  return out;
}

template <typename T>
Matrix<T> matmul_bt(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.cols()) shape_fail("matmul_bt", a.shape(), b.shape());
  Matrix<T> out(a.rows(), b.rows());
  if (!out.empty() && a.cols() > 0) view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

template <typename T>
Matrix<T> matmul_at(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows()) shape_fail("matmul_at", a.shape(), b.shape());
  Matrix<T> out(a.cols(), b.cols());
  if (!out.empty() && a.rows() > 0) view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

template <typename T>
void matmul_accumulate(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
  if (a.cols() != b.rows() || out.rows() != a.rows() || out.cols() != b.cols()) {
    shape_fail("matmul_accumulate", a.shape(), b.shape());
  }
  if (!out.empty() && a.cols() > 0) view(out).noalias() += view(a) * view(b);
}

template <typename T>
void matmul_bt_accumulate(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
  if (a.cols() != b.cols() || out.rows() != a.rows() || out.cols() != b.rows()) {
    shape_fail("matmul_bt_accumulate", a.shape(), b.shape());
  }
  if (!out.empty() && a.cols() > 0) view(out).noalias() += view(a) * view(b).transpose();
}

template <typename T>
void matmul_at_accumulate(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols()) {
    shape_fail("matmul_at_accumulate", a.shape(), b.shape());
  }
  if (!out.empty() && a.rows() > 0) view(out).noalias() += view(a).transpose() * view(b);
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& m) {
  Matrix<T> out(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
  return out;
}

template <typename T>
Matrix<T> add(const Matrix<T>& a, const Matrix<T>& b) {
  require_same("add", a, b);
  Matrix<T> out = a;
  add_inplace(out, b);
  return out;
}

template <typename T>
void add_inplace(Matrix<T>& out, const Matrix<T>& a) {
  require_same("add_inplace", out, a);
  T* o = out.data();
  const T* p = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] += p[i];
}

template <typename T>
Matrix<T> add_row_vector(const Matrix<T>& m, const Matrix<T>& row) {
  require_row_vector("add_row_vector", m, row);
  Matrix<T> out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto dst = out.row(r);
    for (std::size_t c = 0; c < out.cols(); ++c) dst[c] += row[c];
  }
  return out;
}

template <typename T>
Matrix<T> column_sums(const Matrix<T>& m) {
  Matrix<T> out(1, m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto src = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += src[c];
  }
  return out;
}

template <typename T>
Matrix<T> scale(const Matrix<T>& m, T factor) {
  Matrix<T> out = m;
  for (auto& v : out.values()) v *= factor;
  return out;
}

template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& m) {
  Matrix<T> out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto src = m.row(r);
    auto dst = out.row(r);
    if (src.empty()) continue;
    T mx = src[0];
    for (T v : src) mx = std::max(mx, v);
    T sum{0};
    for (std::size_t c = 0; c < src.size(); ++c) {
      dst[c] = std::exp(src[c] - mx);
      sum += dst[c];
    }
    const T inv = T{1} / sum;
    for (auto& v : dst) v *= inv;
  }
  return out;
}

template <typename T>
Matrix<T> softmax_rows_backward(const Matrix<T>& y, const Matrix<T>& dy) {
  require_same("softmax_rows_backward", y, dy);
  Matrix<T> dx(y.rows(), y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto yr = y.row(r);
    auto gr = dy.row(r);
    T dot{0};
    for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
    auto out = dx.row(r);
    for (std::size_t c = 0; c < yr.size(); ++c) out[c] = yr[c] * (gr[c] - dot);
  }
  return dx;
}

template <typename T>
Matrix<T> layer_norm_rows(const Matrix<T>& m, const Matrix<T>& gain, const Matrix<T>& bias,
                          T eps, LayerNormCache<T>* cache) {
  require_row_vector("layer_norm_rows(gain)", m, gain);
  require_row_vector("layer_norm_rows(bias)", m, bias);
  const std::size_t n = m.cols();
  Matrix<T> out(m.rows(), n);
  Matrix<T> normalized(m.rows(), n);
  std::vector<T> inv_std(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto src = m.row(r);
    T mean{0};
    for (T v : src) mean += v;
    mean /= static_cast<T>(n);
    T var{0};
    for (T v : src) var += (v - mean) * (v - mean);
    var /= static_cast<T>(n);
    const T rs = T{1} / std::sqrt(var + eps);
    inv_std[r] = rs;
    auto nr = normalized.row(r);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < n; ++c) {
      nr[c] = (src[c] - mean) * rs;
      dst[c] = gain[c] * nr[c] + bias[c];
    }
  }
  if (cache != nullptr) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
LayerNormGrads<T> layer_norm_rows_backward(const LayerNormCache<T>& cache, const Matrix<T>& gain,
                                           const Matrix<T>& dy) {
  const Matrix<T>& xhat = cache.normalized;
  require_same("layer_norm_rows_backward", xhat, dy);
  const std::size_t n = xhat.cols();
  LayerNormGrads<T> g{Matrix<T>(xhat.rows(), n), Matrix<T>(1, n), Matrix<T>(1, n)};
  for (std::size_t r = 0; r < xhat.rows(); ++r) {
    auto xr = xhat.row(r);
    auto gr = dy.row(r);
    T mean_d{0};
    T mean_dx{0};
    for (std::size_t c = 0; c < n; ++c) {
      g.gain[c] += gr[c] * xr[c];
      g.bias[c] += gr[c];
      const T d = gr[c] * gain[c];
      mean_d += d;
      mean_dx += d * xr[c];
    }
    mean_d /= static_cast<T>(n);
    mean_dx /= static_cast<T>(n);
    auto out = g.input.row(r);
    const T rs = cache.inv_std[r];
    for (std::size_t c = 0; c < n; ++c) {
      out[c] = rs * (gr[c] * gain[c] - mean_d - xr[c] * mean_dx);
    }
  }
  return g;
}

namespace {
template <typename T>
constexpr T kGeluC = static_cast<T>(0.7978845608028654);  // sqrt(2 / pi)
template <typename T>
constexpr T kGeluA = static_cast<T>(0.044715);
}  // namespace

template <typename T>
T gelu(T x) {
  const T u = kGeluC<T> * (x + kGeluA<T> * x * x * x);
  return T{0.5} * x * (T{1} + std::tanh(u));
}

template <typename T>
T gelu_derivative(T x) {
  const T u = kGeluC<T> * (x + kGeluA<T> * x * x * x);
  const T t = std::tanh(u);
  const T du = kGeluC<T> * (T{1} + T{3} * kGeluA<T> * x * x);
  return T{0.5} * (T{1} + t) + T{0.5} * x * (T{1} - t * t) * du;
}

template <typename T>
Matrix<T> gelu(const Matrix<T>& m) {
  Matrix<T> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = gelu(m[i]);
  return out;
}

template <typename T>
Matrix<T> gelu_backward(const Matrix<T>& x, const Matrix<T>& dy) {
  require_same("gelu_backward", x, dy);
  Matrix<T> dx(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = dy[i] * gelu_derivative(x[i]);
  return dx;
}

template <typename T>
Matrix<T> l2_normalize_rows(const Matrix<T>& m, std::vector<std::size_t>* zero_rows) {
  Matrix<T> out = m;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = out.row(r);
    T ss{0};
    for (T v : row) ss += v * v;
    if (ss == T{0}) {
      if (zero_rows != nullptr) zero_rows->push_back(r);
      continue;
    }
    const T inv = T{1} / std::sqrt(ss);
    for (auto& v : row) v *= inv;
  }
  return out;
}

template <typename T>
Matrix<T> l2_normalize_rows_backward(const Matrix<T>& x, const Matrix<T>& dy) {
  require_same("l2_normalize_rows_backward", x, dy);
  Matrix<T> dx(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    auto gr = dy.row(r);
    T ss{0};
    for (T v : xr) ss += v * v;
    if (ss == T{0}) continue;
    const T norm = std::sqrt(ss);
    T proj{0};
    for (std::size_t c = 0; c < xr.size(); ++c) proj += xr[c] * gr[c];
    proj /= ss;
    auto out = dx.row(r);
    for (std::size_t c = 0; c < xr.size(); ++c) out[c] = (gr[c] - xr[c] * proj) / norm;
  }
  return dx;
}

#define CSA_INSTANTIATE_KERNELS(T)                                                            \
  template Matrix<T> matmul(const Matrix<T>&, const Matrix<T>&);                              \
  template Matrix<T> matmul_bt(const Matrix<T>&, const Matrix<T>&);                           \
  template Matrix<T> matmul_at(const Matrix<T>&, const Matrix<T>&);                           \
  template void matmul_accumulate(const Matrix<T>&, const Matrix<T>&, Matrix<T>&);            \
  template void matmul_bt_accumulate(const Matrix<T>&, const Matrix<T>&, Matrix<T>&);         \
  template void matmul_at_accumulate(const Matrix<T>&, const Matrix<T>&, Matrix<T>&);         \
  template Matrix<T> transpose(const Matrix<T>&);                                             \
  template Matrix<T> add(const Matrix<T>&, const Matrix<T>&);                                 \
  template void add_inplace(Matrix<T>&, const Matrix<T>&);                                    \
  template Matrix<T> add_row_vector(const Matrix<T>&, const Matrix<T>&);                      \
  template Matrix<T> column_sums(const Matrix<T>&);                                           \
  template Matrix<T> scale(const Matrix<T>&, T);                                              \
  template Matrix<T> softmax_rows(const Matrix<T>&);                                          \
  template Matrix<T> softmax_rows_backward(const Matrix<T>&, const Matrix<T>&);               \
  template Matrix<T> layer_norm_rows(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&, T, \
                                     LayerNormCache<T>*);                                     \
  template LayerNormGrads<T> layer_norm_rows_backward(const LayerNormCache<T>&,               \
                                                      const Matrix<T>&, const Matrix<T>&);    \
  template T gelu(T);                                                                         \
  template T gelu_derivative(T);                                                              \
  template Matrix<T> gelu(const Matrix<T>&);                                                  \
  template Matrix<T> gelu_backward(const Matrix<T>&, const Matrix<T>&);                       \
  template Matrix<T> l2_normalize_rows(const Matrix<T>&, std::vector<std::size_t>*);          \
  template Matrix<T> l2_normalize_rows_backward(const Matrix<T>&, const Matrix<T>&);

CSA_INSTANTIATE_KERNELS(float)
CSA_INSTANTIATE_KERNELS(double)

#undef CSA_INSTANTIATE_KERNELS

}  // namespace csa
