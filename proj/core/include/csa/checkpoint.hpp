// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint:
//
//   "CSAC" | u32 version | u32 tensor count
//   per tensor: u16 name length | name (UTF-8) | u8 rank | rank x u64 dims |
//               f32 values, little endian, row-major
//   u32 record length | config record (JSON text)
//
// Every checkpoint is accompanied by "<path>.json", a human-readable copy of
// the config record plus a tensor listing.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csa/encoder.hpp"
#include "csa/errors.hpp"

namespace csa {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingProgress {
  std::uint64_t epoch = 0;  // completed epochs
  std::uint64_t step = 0;   // completed optimizer steps
  std::uint64_t total_steps = 0;
  double best_validation_map = -1.0;

  friend bool operator==(const TrainingProgress&, const TrainingProgress&) = default;
};

struct Checkpoint {
  EncoderConfig config;
  EncoderParams<float> params;
  std::optional<EncoderParams<float>> momentum;
  TrainingProgress progress;
  nlohmann::json run_config = nlohmann::json::object();  // hyperparameters echo
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on bad magic, unknown version, truncation, or a
/// tensor that does not fit the stored config.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Writes the binary file and its JSON sidecar.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);
nlohmann::json checkpoint_summary(const Checkpoint& ckpt);

}  // namespace csa
