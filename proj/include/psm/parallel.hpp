#pragma once

// Optional node-level parallelism. Work is split into contiguous index
// blocks, each computed by exactly the same serial code, so enabling
// threads never changes output bits.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace psm {

// Worker cap from PSM_THREADS (0 or unset means serial). Cached on first use;
// set_thread_limit overrides it.
std::size_t thread_limit();
void set_thread_limit(std::size_t n);

template <typename F>
void parallel_for(std::size_t begin, std::size_t end, F&& fn) {
  const std::size_t n = end > begin ? end - begin : 0;
  const std::size_t workers = thread_limit();
  if (workers <= 1 || n < 2 * workers) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
    return;
  }
  const std::size_t block = (n + workers - 1) / workers;
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = begin + w * block;
    const std::size_t hi = std::min(end, lo + block);
    if (lo >= hi) break;
    threads.emplace_back([lo, hi, &fn, &errors, w] {
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace psm
