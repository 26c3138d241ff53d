// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "csa/affinity.hpp"
#include "csa/embeddings.hpp"
#include "csa/metrics.hpp"

namespace csa {

/// Clustered embeddings on the unit sphere with several noisy "views" of the
/// same latent items, standing in for features from different extractors.
struct SyntheticDatasetSpec {
  std::size_t cluster_count = 100;
  std::size_t items_per_cluster = 30;
  std::size_t dim = 32;
  double noise_sigma = 0.2;
  std::size_t num_views = 3;
  std::size_t distractor_count = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticDataset {
  std::vector<EmbeddingMatrix> views;  // identical id order in every view
  LabelMap labels;                     // cluster id, or -1 for distractors
  std::vector<std::string> clustered_ids;
};

/// Cluster centers are uniform on the sphere; item = normalize(center +
/// sigma * N(0, I)), re-drawn independently per view. Distractors get a free
/// base direction and the same per-view noise.
SyntheticDataset generate_synthetic(const SyntheticDatasetSpec& spec);

/// Same-label positives (query excluded) for each query over `universe`.
GroundTruth make_ground_truth(const LabelMap& labels, const std::vector<std::string>& universe,
                              const std::vector<std::string>& queries);

/// Seeded sample of `count` clustered ids, returned in dataset order.
std::vector<std::string> sample_queries(const std::vector<std::string>& candidates,
                                        std::size_t count, std::uint64_t seed);

}  // namespace csa
