#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace classrag {

// Runs fn(i) for i in [0, count) on at most `max_parallel` threads. Callers
// write results by index, so output order never depends on scheduling. If any
// invocation throws, the rest still run and the exception from the lowest
// index is rethrown at the end.
template <class Fn>
void parallel_for(std::size_t count, std::size_t max_parallel, Fn&& fn) {
  if (count == 0) return;
  std::vector<std::exception_ptr> errors(count);
  if (max_parallel <= 1 || count == 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  const std::size_t workers = std::min(max_parallel, count);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace classrag
