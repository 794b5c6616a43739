#pragma once

#include <cstddef>
#include <functional>

namespace disa::parallel {

/// Number of worker threads used by data-parallel loops. Zero restores the runtime default.
void set_thread_count(int threads);
int thread_count();

/// True while executing inside a parallel region; nested loops then run serially.
bool in_parallel_region();

/// Runs body(i) for i in [0, n). Iterations must be independent.
void for_each(std::size_t n, const std::function<void(std::size_t)>& body);

/// Runs body(begin, end) over fixed-size chunks of [0, n).
void for_each_chunk(std::size_t n, std::size_t chunk,
                    const std::function<void(std::size_t, std::size_t)>& body);

/// Block size for deterministic reductions. Partials are formed over these blocks and summed
/// in block order, so the result does not depend on the thread count.
inline constexpr std::size_t kReductionBlock = 1024;

/// Sum of block_sum(begin, end) over kReductionBlock-sized blocks, added in block order.
double ordered_sum(std::size_t n, const std::function<double(std::size_t, std::size_t)>& block_sum);

}  // namespace disa::parallel
