// SPDX-License-Identifier: Apache-2.0
//
// On-disk formats. See docs/formats.md for the byte layouts.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csa/affinity.hpp"
#include "csa/embeddings.hpp"
#include "csa/errors.hpp"
#include "csa/metrics.hpp"

namespace csa {

inline constexpr std::uint32_t kEmbeddingVersion = 1;
inline constexpr int kTextFormatVersion = 1;

std::vector<std::uint8_t> encode_embeddings(const EmbeddingMatrix& embeddings);
EmbeddingMatrix decode_embeddings(std::span<const std::uint8_t> bytes);
void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& embeddings);
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);

struct RankingSet {
  std::string method;  // may be empty
  std::vector<RankingList> lists;

  friend bool operator==(const RankingSet&, const RankingSet&) = default;
};

std::string encode_rankings(const RankingSet& rankings);
RankingSet decode_rankings(std::string_view text);
void write_rankings(const std::filesystem::path& path, const RankingSet& rankings);
RankingSet read_rankings(const std::filesystem::path& path);

std::string encode_ground_truth(const GroundTruth& truth);
GroundTruth decode_ground_truth(std::string_view text);
void write_ground_truth(const std::filesystem::path& path, const GroundTruth& truth);
GroundTruth read_ground_truth(const std::filesystem::path& path);

/// Written sorted by id.
std::string encode_labels(const LabelMap& labels);
LabelMap decode_labels(std::string_view text);
void write_labels(const std::filesystem::path& path, const LabelMap& labels);
LabelMap read_labels(const std::filesystem::path& path);

/// One id per line; blank lines and '#' comments ignored.
std::vector<std::string> decode_id_list(std::string_view text);
std::string encode_id_list(const std::vector<std::string>& ids);
std::vector<std::string> read_id_list(const std::filesystem::path& path);
void write_id_list(const std::filesystem::path& path, const std::vector<std::string>& ids);

/// Shortest decimal that parses back to the same double.
std::string format_double(double value);

}  // namespace csa
