// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>

#include "csa/encoder.hpp"

namespace csa {

struct OptimizerConfig {
  double learning_rate = 0.1;
  double weight_decay = 1e-5;
  double momentum = 0.9;
};

/// SGD with momentum. Buffers mirror the parameter tensors.
struct OptimizerState {
  OptimizerConfig config;
  EncoderParams<float> momentum_buffers;
  std::uint64_t step = 0;
  std::uint64_t total_steps = 0;
};

OptimizerState make_optimizer_state(const EncoderParams<float>& params,
                                    const OptimizerConfig& config, std::uint64_t total_steps);

/// lr0 * 0.5 * (1 + cos(pi * step / total_steps)); step is clamped to total.
double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double lr0);

/// buf = momentum * buf + (grad + wd * param) ; param -= lr * buf.
/// Weight decay touches weight matrices only. Returns false, leaving
/// params and buffers untouched, when any gradient is non-finite.
/// The step counter advances only on success.
template <typename T>
bool sgd_step(EncoderParams<T>& params, const EncoderParams<T>& grads, EncoderParams<T>& buffers,
              const OptimizerConfig& config, double lr);

bool sgd_step(EncoderParams<float>& params, const EncoderParams<float>& grads,
              OptimizerState& state, double lr);

}  // namespace csa
