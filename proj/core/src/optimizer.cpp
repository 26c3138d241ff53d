// SPDX-License-Identifier: Apache-2.0
#include "csa/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace csa {

OptimizerState make_optimizer_state(const EncoderParams<float>& params,
                                    const OptimizerConfig& config, std::uint64_t total_steps) {
  OptimizerState s;
  s.config = config;
  s.momentum_buffers = params.zeros_like();
  s.total_steps = total_steps;
  return s;
}

double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double lr0) {
  if (total_steps == 0) return lr0;
  const double t = static_cast<double>(std::min(step, total_steps)) / static_cast<double>(total_steps);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

template <typename T>
bool sgd_step(EncoderParams<T>& params, const EncoderParams<T>& grads, EncoderParams<T>& buffers,
              const OptimizerConfig& config, double lr) {
  std::vector<const Matrix<T>*> g;
  bool finite = true;
  grads.visit([&](const std::string&, const Matrix<T>& m, TensorRole) {
    g.push_back(&m);
    finite = finite && m.all_finite();
  });
  if (!finite) return false;
  std::vector<Matrix<T>*> b;
  buffers.visit([&](const std::string&, Matrix<T>& m, TensorRole) { b.push_back(&m); });

  const T momentum = static_cast<T>(config.momentum);
  const T decay = static_cast<T>(config.weight_decay);
  const T rate = static_cast<T>(lr);
  std::size_t i = 0;
  params.visit([&](const std::string& name, Matrix<T>& p, TensorRole role) {
    const Matrix<T>& grad = *g.at(i);
    Matrix<T>& buf = *b.at(i);
    ++i;
    if (!p.same_shape(grad) || !p.same_shape(buf)) {
      throw ShapeError("sgd_step: " + name + " " + p.shape() + " grad " + grad.shape() +
                       " buffer " + buf.shape());
    }
    const T wd = role == TensorRole::kWeight ? decay : T{0};
    for (std::size_t k = 0; k < p.size(); ++k) {
      buf[k] = momentum * buf[k] + (grad[k] + wd * p[k]);
      p[k] -= rate * buf[k];
    }
  });
  return true;
}

bool sgd_step(EncoderParams<float>& params, const EncoderParams<float>& grads,
              OptimizerState& state, double lr) {
  if (!sgd_step(params, grads, state.momentum_buffers, state.config, lr)) return false;
  ++state.step;
  return true;
}

template bool sgd_step(EncoderParams<float>&, const EncoderParams<float>&, EncoderParams<float>&,
                       const OptimizerConfig&, double);
template bool sgd_step(EncoderParams<double>&, const EncoderParams<double>&,
                       EncoderParams<double>&, const OptimizerConfig&, double);

}  // namespace csa
