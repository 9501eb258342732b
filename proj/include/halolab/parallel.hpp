// Deterministic work splitting: fixed chunk boundaries derived from the item
// count alone, results merged in chunk order, so outputs are bit-identical
// for every thread count.
#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <thread>
#include <utility>
#include <vector>

namespace halolab {

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// Splits [0, items) into contiguous chunks (at most max_chunks, independent of
// the thread count) and runs fn(chunk_index, begin, end). Callers must make
// chunks write disjoint state (for example one accumulator per chunk) and
// merge in chunk order afterwards.
inline void run_chunked(std::int64_t items, int threads, int max_chunks,
                        const std::function<void(int, std::int64_t, std::int64_t)>& fn) {
  if (items <= 0) return;
  int chunks = max_chunks;
  if (chunks > items) chunks = static_cast<int>(items);
  if (chunks < 1) chunks = 1;
  std::vector<std::pair<std::int64_t, std::int64_t>> ranges;
  ranges.reserve(static_cast<std::size_t>(chunks));
  for (int c = 0; c < chunks; ++c) {
    std::int64_t b = items * c / chunks;
    std::int64_t e = items * (c + 1) / chunks;
    if (b < e) ranges.emplace_back(b, e);
  }
  threads = resolve_threads(threads);
  if (threads <= 1 || ranges.size() <= 1) {
    for (std::size_t c = 0; c < ranges.size(); ++c) fn(static_cast<int>(c), ranges[c].first, ranges[c].second);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      std::size_t c = next.fetch_add(1);
      if (c >= ranges.size()) return;
      fn(static_cast<int>(c), ranges[c].first, ranges[c].second);
    }
  };
  int spawn = std::min<int>(threads, static_cast<int>(ranges.size()));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(spawn));
  for (int t = 0; t < spawn; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace halolab
