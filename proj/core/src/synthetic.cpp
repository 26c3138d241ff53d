// SPDX-License-Identifier: Apache-2.0
#include "csa/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "csa/rng.hpp"

namespace csa {

void SyntheticDatasetSpec::validate() const {
  if (cluster_count < 1 || items_per_cluster < 1 || dim < 1 || num_views < 1) {
    throw std::invalid_argument("synthetic spec: counts must be >= 1");
  }
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("synthetic spec: noise_sigma must be >= 0");
}

namespace {

std::size_t digits(std::size_t n) {
  std::size_t d = 1;
  while (n >= 10) {
    n /= 10;
    ++d;
  }
  return d;
}

std::string padded(std::size_t value, std::size_t width) {
  std::string s = std::to_string(value);
  if (s.size() < width) s.insert(0, width - s.size(), '0');
  return s;
}

void normalize(std::vector<double>& v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  if (ss == 0.0) return;
  const double inv = 1.0 / std::sqrt(ss);
  for (double& x : v) x *= inv;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticDatasetSpec& spec) {
  spec.validate();
  const std::size_t d = spec.dim;
  const std::size_t clustered = spec.cluster_count * spec.items_per_cluster;
  const std::size_t n = clustered + spec.distractor_count;

  Rng base(spec.seed);
  Rng latent = base.fork(0);
  auto unit_vector = [&](Rng& rng) {
    std::vector<double> v(d);
    for (double& x : v) x = rng.normal();
    normalize(v);
    return v;
  };
  std::vector<std::vector<double>> anchors;
  anchors.reserve(spec.cluster_count + spec.distractor_count);
  for (std::size_t c = 0; c < spec.cluster_count; ++c) anchors.push_back(unit_vector(latent));
  for (std::size_t i = 0; i < spec.distractor_count; ++i) anchors.push_back(unit_vector(latent));

  SyntheticDataset out;
  std::vector<std::string> ids;
  std::vector<std::size_t> anchor_of;
  ids.reserve(n);
  const std::size_t cw = digits(spec.cluster_count - 1);
  const std::size_t iw = digits(spec.items_per_cluster - 1);
  for (std::size_t c = 0; c < spec.cluster_count; ++c) {
    for (std::size_t i = 0; i < spec.items_per_cluster; ++i) {
      ids.push_back("c" + padded(c, cw) + "_i" + padded(i, iw));
      anchor_of.push_back(c);
      out.labels[ids.back()] = static_cast<std::int64_t>(c);
    }
  }
  const std::size_t dw = digits(spec.distractor_count == 0 ? 0 : spec.distractor_count - 1);
  for (std::size_t i = 0; i < spec.distractor_count; ++i) {
    ids.push_back("d" + padded(i, dw));
    anchor_of.push_back(spec.cluster_count + i);
    out.labels[ids.back()] = -1;
  }
  out.clustered_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(clustered));

  for (std::size_t v = 0; v < spec.num_views; ++v) {
    Rng noise = base.fork(1 + v);
    MatrixF rows(n, d);
    std::vector<double> item(d);
    for (std::size_t r = 0; r < n; ++r) {
      const auto& a = anchors[anchor_of[r]];
      for (std::size_t k = 0; k < d; ++k) item[k] = a[k] + spec.noise_sigma * noise.normal();
      normalize(item);
      auto dst = rows.row(r);
      for (std::size_t k = 0; k < d; ++k) dst[k] = static_cast<float>(item[k]);
    }
    out.views.emplace_back(ids, std::move(rows));
  }
  return out;
}

GroundTruth make_ground_truth(const LabelMap& labels, const std::vector<std::string>& universe,
                              const std::vector<std::string>& queries) {
  std::unordered_map<std::int64_t, std::vector<std::string>> members;
  for (const auto& id : universe) {
    auto it = labels.find(id);
    if (it != labels.end() && it->second >= 0) members[it->second].push_back(id);
  }
  GroundTruth truth;
  truth.reserve(queries.size());
  for (const auto& q : queries) {
    QueryTruth entry;
    entry.query_id = q;
    auto it = labels.find(q);
    if (it != labels.end() && it->second >= 0) {
      for (const auto& id : members[it->second]) {
        if (id != q) entry.positives.push_back(id);
      }
    }
    truth.push_back(std::move(entry));
  }
  return truth;
}

std::vector<std::string> sample_queries(const std::vector<std::string>& candidates,
                                        std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  order.resize(std::min(count, order.size()));
  std::sort(order.begin(), order.end());
  std::vector<std::string> out;
  out.reserve(order.size());
  for (auto i : order) out.push_back(candidates[i]);
  return out;
}

}  // namespace csa
