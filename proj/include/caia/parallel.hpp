#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace caia {

/// Runs fn(i) for i in [0, n) across `workers` threads with a static
/// contiguous partition. Each index must write only to its own output slot;
/// callers then reduce those slots in index order, so results are identical
/// at any worker count.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  if (n == 0) return;
  if (workers <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t k = workers < n ? workers : n;
  std::vector<std::thread> threads;
  threads.reserve(k);
  const std::size_t chunk = (n + k - 1) / k;
  for (std::size_t w = 0; w < k; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = lo + chunk < n ? lo + chunk : n;
    if (lo >= hi) break;
    threads.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : threads) t.join();
}

}  // namespace caia
