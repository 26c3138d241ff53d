// SPDX-License-Identifier: Apache-2.0
#include "csa/parallel.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace csa {

std::size_t resolve_threads(std::size_t requested, bool deterministic) {
  if (deterministic) return 1;
  if (requested == 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
  }
  return requested;
}

std::size_t chunk_count(std::size_t count, std::size_t threads) {
  return std::max<std::size_t>(1, std::min(count, std::max<std::size_t>(threads, 1)));
}

void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t, std::size_t, std::size_t)>& body) {
  const std::size_t chunks = chunk_count(count, threads);
  if (chunks == 1) {
    body(0, count, 0);
    return;
  }
  const std::size_t base = count / chunks;
  const std::size_t extra = count % chunks;
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> workers;
  workers.reserve(chunks);
  std::size_t begin = 0;
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t end = begin + base + (c < extra ? 1 : 0);
    workers.emplace_back([&, begin, end, c] {
      try {
        body(begin, end, c);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
    begin = end;
  }
  workers.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace csa
