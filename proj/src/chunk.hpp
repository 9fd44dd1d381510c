#pragma once

#include <algorithm>

namespace unln::detail {

// Fixed partition of [0, n) into at most kMaxChunks contiguous blocks.
// Reductions accumulate serially inside a chunk and combine chunk partials in
// ascending order, so results are bitwise identical for any thread count.
constexpr long kMaxChunks = 64;

struct ChunkPlan {
  long n = 0;
  long chunk_size = 1;
  long count = 0;

  long begin(long c) const { return c * chunk_size; }
  long end(long c) const { return std::min(n, (c + 1) * chunk_size); }
};

inline ChunkPlan chunk_plan(long n) {
  ChunkPlan p;
  p.n = n;
  p.chunk_size = std::max<long>(1, (n + kMaxChunks - 1) / kMaxChunks);
  p.count = n > 0 ? (n + p.chunk_size - 1) / p.chunk_size : 0;
  return p;
}

}  // namespace unln::detail
