// SPDX-License-Identifier: Apache-2.0
#include "csa/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace csa {

void LossConfig::validate() const {
  if (!(temperature > 0.0)) throw std::invalid_argument("loss: temperature must be positive");
  if (!(lambda >= 0.0)) throw std::invalid_argument("loss: lambda must be non-negative");
}

namespace {

template <typename T>
double row_norm(const Matrix<T>& m, std::size_t r) {
  double ss = 0.0;
  for (T v : m.row(r)) ss += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(ss);
}

template <typename T>
double row_dot(const Matrix<T>& m, std::size_t a, std::size_t b) {
  auto ra = m.row(a);
  auto rb = m.row(b);
  double s = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    s += static_cast<double>(ra[i]) * static_cast<double>(rb[i]);
  }
  return s;
}

double log_sum_exp(const std::vector<double>& z, const std::vector<std::size_t>& idx) {
  double mx = -std::numeric_limits<double>::infinity();
  for (auto i : idx) mx = std::max(mx, z[i]);
  double s = 0.0;
  for (auto i : idx) s += std::exp(z[i] - mx);
  return mx + std::log(s);
}

}  // namespace

template <typename T>
double row_cosine(const Matrix<T>& m, std::size_t a, std::size_t b) {
  const double na = row_norm(m, a);
  const double nb = row_norm(m, b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return row_dot(m, a, b) / (na * nb);
}

template <typename T>
std::optional<LossValue<T>> contrastive_loss(const Matrix<T>& refined,
                                             const std::vector<bool>& relevant,
                                             const std::vector<bool>& valid, double temperature) {
  const std::size_t k = refined.rows();
  if (relevant.size() != k || valid.size() != k) {
    throw ShapeError("contrastive_loss: mask lengths " + std::to_string(relevant.size()) + "/" +
                     std::to_string(valid.size()) + " vs " + refined.shape());
  }
  if (k == 0) return std::nullopt;

  std::vector<std::size_t> all;
  std::vector<std::size_t> pos;
  for (std::size_t i = 1; i < k; ++i) {
    if (!valid[i]) continue;
    all.push_back(i);
    if (relevant[i]) pos.push_back(i);
  }
  if (pos.empty()) return std::nullopt;

  const std::size_t d = refined.cols();
  std::vector<double> norms(k);
  for (std::size_t i = 0; i < k; ++i) norms[i] = row_norm(refined, i);
  std::vector<double> z(k, 0.0);
  std::vector<double> cos(k, 0.0);
  for (auto i : all) {
    cos[i] = row_cosine(refined, 0, i);
    z[i] = cos[i] / temperature;
  }
  const double lse_all = log_sum_exp(z, all);
  const double lse_pos = log_sum_exp(z, pos);

  LossValue<T> out;
  out.loss = lse_all - lse_pos;
  out.gradient = Matrix<T>(k, d);

  // dL/dz_i = softmax_all(z)_i - softmax_pos(z)_i, then through the cosine.
  std::vector<double> dcos(k, 0.0);
  for (auto i : all) dcos[i] = std::exp(z[i] - lse_all) / temperature;
  for (auto i : pos) dcos[i] -= std::exp(z[i] - lse_pos) / temperature;

  const double n0 = norms[0];
  std::vector<double> g0(d, 0.0);
  for (auto i : all) {
    const double ni = norms[i];
    if (n0 == 0.0 || ni == 0.0 || dcos[i] == 0.0) continue;
    auto y0 = refined.row(0);
    auto yi = refined.row(i);
    auto gi = out.gradient.row(i);
    // d cos / d y_i = y_0/(n0 ni) - cos * y_i / ni^2, symmetric for y_0.
    for (std::size_t c = 0; c < d; ++c) {
      gi[c] += static_cast<T>(dcos[i] * (y0[c] / (n0 * ni) - cos[i] * yi[c] / (ni * ni)));
      g0[c] += dcos[i] * (yi[c] / (n0 * ni) - cos[i] * y0[c] / (n0 * n0));
    }
  }
  auto gq = out.gradient.row(0);
  for (std::size_t c = 0; c < d; ++c) gq[c] = static_cast<T>(g0[c]);
  return out;
}

template <typename T>
LossValue<T> mse_loss(const Matrix<T>& original, const Matrix<T>& reconstructed,
                      const std::vector<bool>& valid, MseReduction reduction) {
  if (!original.same_shape(reconstructed)) {
    throw ShapeError("mse_loss: original " + original.shape() + " vs reconstructed " +
                     reconstructed.shape());
  }
  if (valid.size() != original.rows()) {
    throw ShapeError("mse_loss: mask length " + std::to_string(valid.size()) + " vs " +
                     original.shape());
  }
  LossValue<T> out;
  out.gradient = Matrix<T>(original.rows(), original.cols());
  for (std::size_t r = 0; r < original.rows(); ++r) {
    if (!valid[r]) continue;
    auto s = original.row(r);
    auto y = reconstructed.row(r);
    auto g = out.gradient.row(r);
    for (std::size_t c = 0; c < s.size(); ++c) {
      const double diff = static_cast<double>(y[c]) - static_cast<double>(s[c]);
      out.loss += diff * diff;
      g[c] = static_cast<T>(2.0 * diff);
    }
  }
  if (reduction == MseReduction::kMean) {
    std::size_t rows = 0;
    for (bool v : valid) rows += v ? 1 : 0;
    const std::size_t count = rows * original.cols();
    if (count > 0) {
      const double inv = 1.0 / static_cast<double>(count);
      out.loss *= inv;
      for (T& g : out.gradient.values()) g = static_cast<T>(g * inv);
    }
  }
  return out;
}

#define CSA_INSTANTIATE_LOSSES(T)                                                           \
  template double row_cosine(const Matrix<T>&, std::size_t, std::size_t);                  \
  template std::optional<LossValue<T>> contrastive_loss(                                    \
      const Matrix<T>&, const std::vector<bool>&, const std::vector<bool>&, double);        \
  template LossValue<T> mse_loss(const Matrix<T>&, const Matrix<T>&, const std::vector<bool>&, \
                                 MseReduction);

CSA_INSTANTIATE_LOSSES(float)
CSA_INSTANTIATE_LOSSES(double)

#undef CSA_INSTANTIATE_LOSSES

}  // namespace csa
