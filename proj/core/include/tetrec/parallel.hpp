#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace tetrec {

/// Global worker count used by parallel_for. 0 means "hardware concurrency".
void set_thread_count(int n);
int thread_count();

/// Runs fn(begin, end, chunk_index) over static contiguous chunks of [0, n).
///
/// Chunk assignment is a pure function of (n, thread_count), so any reduction
/// that combines per-chunk partials in chunk order is deterministic regardless
/// of scheduling. Exceptions thrown by fn propagate to the caller.
void parallel_for_chunks(int64_t n,
                         const std::function<void(int64_t, int64_t, int)>& fn);

/// Element-wise convenience wrapper: fn(i) for i in [0, n).
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

/// Deterministic sum reduction: partials are added in chunk order.
double parallel_sum(int64_t n, const std::function<double(int64_t)>& fn);

/// Number of chunks parallel_for_chunks will use for n items.
int parallel_chunk_count(int64_t n);

} // namespace tetrec
