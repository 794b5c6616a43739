#include "disa/parallel.hpp"

#include <omp.h>

#include <algorithm>
#include <vector>

namespace disa::parallel {

void set_thread_count(int threads) {
  if (threads <= 0) threads = omp_get_num_procs();
  omp_set_num_threads(threads);
}

int thread_count() { return omp_get_max_threads(); }

bool in_parallel_region() { return omp_in_parallel() != 0; }

void for_each(std::size_t n, const std::function<void(std::size_t)>& body) {
  const auto count = static_cast<long long>(n);
  if (n < 2 || omp_in_parallel() || omp_get_max_threads() == 1) {
    for (long long i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
    return;
  }
#pragma omp parallel for schedule(dynamic, 1)
  for (long long i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
}

void for_each_chunk(std::size_t n, std::size_t chunk,
                    const std::function<void(std::size_t, std::size_t)>& body) {
  if (chunk == 0) chunk = 1;
  const std::size_t blocks = (n + chunk - 1) / chunk;
  for_each(blocks, [&](std::size_t b) {
    const std::size_t begin = b * chunk;
    body(begin, std::min(n, begin + chunk));
  });
}

double ordered_sum(std::size_t n, const std::function<double(std::size_t, std::size_t)>& block_sum) {
  const std::size_t blocks = (n + kReductionBlock - 1) / kReductionBlock;
  std::vector<double> partial(blocks, 0.0);
  for_each(blocks, [&](std::size_t b) {
    const std::size_t begin = b * kReductionBlock;
    partial[b] = block_sum(begin, std::min(n, begin + kReductionBlock));
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace disa::parallel
