// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

namespace csa {

/// Counter-based generator (SplitMix64 finalizer over a Weyl sequence).
/// The raw 64-bit stream depends only on the seed, so it is identical on
/// every platform; the real-valued draws below are built from it with
/// explicit formulas rather than std:: distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept : seed_(seed), counter_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept;

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one draw per call).
  double normal() noexcept;

  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Independent child stream; the same (seed, stream) always yields the
  /// same child.
  Rng fork(std::uint64_t stream) const noexcept;

  template <typename U>
  void shuffle(std::span<U> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace csa
