#pragma once

#include <cstddef>
#include <functional>

namespace netflow::parallel {

/// Worker count: NETFLOW_THREADS if set (>= 1), else the hardware concurrency.
std::size_t thread_count();

/// Splits [0, n) into at most thread_count() contiguous chunks and runs
/// fn(chunk, begin, end) for each, chunk 0 on the calling thread. Chunk
/// boundaries depend only on n and the chunk count, so callers that merge
/// per-chunk results in chunk order get the same output for any thread count
/// as long as the merge itself is order-preserving.
void for_chunks(std::size_t n, std::size_t min_chunk,
                const std::function<void(std::size_t chunk, std::size_t begin, std::size_t end)>& fn);

/// Number of chunks for_chunks would use for (n, min_chunk).
std::size_t chunk_count(std::size_t n, std::size_t min_chunk);

}  // namespace netflow::parallel
