#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "bpre/rng.hpp"

namespace bpre {

// Fixed chunk size for all parallel sampling. Must never depend on the worker
// count: results are reduced in chunk order, so estimates are bit-identical
// for any number of workers.
inline constexpr std::uint64_t kChunkSamples = 16384;

struct ChunkRange {
  std::uint64_t index;  // chunk index, also the rng derivation counter
  std::uint64_t first;  // first sample id
  std::uint64_t count;  // samples in this chunk
};

inline std::uint64_t chunk_count(std::uint64_t total,
                                 std::uint64_t chunk = kChunkSamples) {
  return (total + chunk - 1) / chunk;
}

// Runs fn(range, rng) over all chunks of `total` samples and returns the
// per-chunk results ordered by chunk index. fn must be pure given its
// arguments. Exceptions from workers are rethrown on the calling thread.
template <class Result, class Fn>
std::vector<Result> run_chunked(std::uint64_t total, const RngKey& key,
                                int workers, Fn&& fn,
                                std::uint64_t chunk = kChunkSamples) {
  const std::uint64_t chunks = chunk_count(total, chunk);
  std::vector<Result> results(chunks);
  if (chunks == 0) return results;
  if (workers < 1) workers = 1;

  std::atomic<std::uint64_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto body = [&] {
    for (;;) {
      const std::uint64_t c = next.fetch_add(1);
      if (c >= chunks || failed.load(std::memory_order_relaxed)) break;
      try {
        ChunkRange range{c, c * chunk,
                         std::min(chunk, total - c * chunk)};
        Xoshiro256PP rng = chunk_rng(key, c);
        results[c] = fn(range, rng);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true)) error = std::current_exception();
        break;
      }
    }
  };

  if (workers == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int i = 0; i < workers; ++i) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return results;
}

}  // namespace bpre
