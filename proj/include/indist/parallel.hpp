#pragma once

// Minimal fork-join helper. Work items write only to their own output slot,
// so any thread count yields identical results; reductions stay sequential
// at the call site.

#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace indist {

template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::size_t nthreads = static_cast<std::size_t>(threads);
  if (nthreads > count) nthreads = count;
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  std::exception_ptr first_error = nullptr;
  std::mutex guard;
  for (std::size_t t = 0; t < nthreads; ++t) {
    std::size_t lo = count * t / nthreads;
    std::size_t hi = count * (t + 1) / nthreads;
    pool.emplace_back([&, lo, hi]() {
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(guard);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace indist
