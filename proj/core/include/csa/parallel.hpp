// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace csa {

/// Resolves a requested thread count: 0 means hardware concurrency,
/// deterministic mode always yields 1.
std::size_t resolve_threads(std::size_t requested, bool deterministic);

/// Splits [0, count) into at most `threads` contiguous chunks and runs
/// body(begin, end, chunk_index) on each. Chunk boundaries depend only on
/// (count, threads). Exceptions from any chunk are rethrown on the caller.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

/// Number of chunks parallel_for will use.
std::size_t chunk_count(std::size_t count, std::size_t threads);

}  // namespace csa
