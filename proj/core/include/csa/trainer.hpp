// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "csa/affinity.hpp"
#include "csa/checkpoint.hpp"
#include "csa/encoder.hpp"
#include "csa/losses.hpp"
#include "csa/optimizer.hpp"

namespace csa {

struct TrainRunConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  std::size_t k_train = 512;
  std::size_t l = 512;
  double validation_fraction = 0.1;
  std::size_t threads = 1;
  bool deterministic = false;
  /// Checkpoints (last.ckpt, best.ckpt) and loss_log.ndjson go here; empty
  /// disables all file output.
  std::filesystem::path output_dir;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainRunConfig& c);
void from_json(const nlohmann::json& j, TrainRunConfig& c);
void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);
void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);

/// Mean losses over one optimizer step's batch.
struct LossRecord {
  std::uint64_t epoch = 0;  // 1-based
  std::uint64_t step = 0;   // 1-based, global
  double lr = 0.0;
  double contrastive = 0.0;
  double mse = 0.0;
  double total = 0.0;
  bool applied = true;  // false if the update was dropped for a non-finite gradient

  nlohmann::json to_json() const;
};

struct EpochSummary {
  std::uint64_t epoch = 0;
  double contrastive = 0.0;
  double mse = 0.0;
  double total = 0.0;
  std::optional<double> validation_map;

  nlohmann::json to_json() const;
};

struct TrainReport {
  std::vector<LossRecord> steps;
  std::vector<EpochSummary> epochs;
  std::size_t samples_used = 0;
  std::size_t samples_skipped = 0;  // no relevant candidate after the query
  std::size_t dropped_steps = 0;
  TrainingProgress progress;
};

struct TrainResult {
  EncoderParams<float> params;
  EncoderParams<float> momentum;
  TrainReport report;
};

struct LossBreakdown {
  double contrastive = 0.0;
  double mse = 0.0;
  double total = 0.0;
  std::size_t counted = 0;
};

/// Forward (and optionally backward) for one sample. Returns nullopt for
/// samples without a relevant candidate. When grads is non-null, adds
/// grad_scale * d(total)/d(params) to it.
std::optional<LossBreakdown> sample_loss(const EncoderParams<float>& params,
                                         const EncoderConfig& config, const LossConfig& loss,
                                         const TrainingSample& sample,
                                         EncoderParams<float>* grads = nullptr,
                                         double grad_scale = 1.0);

/// Mean losses over the samples that have positives.
LossBreakdown evaluate_loss(const EncoderParams<float>& params, const EncoderConfig& config,
                            const LossConfig& loss, std::span<const TrainingSample> samples);

/// AP of the refined ordering of rows 1..K-1, normalized by the sample's
/// total positive count.
double sample_average_precision(std::span<const double> scores, const TrainingSample& sample);

/// Mean sample AP after re-ranking each sample with params.
double validation_map(const EncoderParams<float>& params, const EncoderConfig& config,
                      std::span<const TrainingSample> samples);

/// Per-epoch seeded shuffle, mean batch loss, one SGD step per batch with a
/// per-step cosine schedule. With `resume`, parameters, momentum, and the
/// step counter continue from the checkpoint. Throws std::runtime_error when
/// no sample has a positive.
TrainResult train(std::span<const TrainingSample> samples,
                  std::span<const TrainingSample> validation, const EncoderConfig& config,
                  const LossConfig& loss, const OptimizerConfig& optimizer,
                  const TrainRunConfig& run, const Checkpoint* resume = nullptr);

}  // namespace csa
