#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace geomap {

/// Run fn(0..n-1) on at most `cap` threads. Results land by index, so output
/// order never depends on scheduling. The first exception (by index) is rethrown
/// after all work settles.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t cap, Fn&& fn) {
  if (n == 0) return;
  cap = std::clamp<std::size_t>(cap, 1, n);
  std::vector<std::exception_ptr> errors(n);
  if (cap == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(cap);
    for (std::size_t w = 0; w < cap; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : workers) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <typename T, typename Fn>
std::vector<T> parallel_map(std::size_t n, std::size_t cap, Fn&& fn) {
  std::vector<T> out(n);
  parallel_for(n, cap, [&](std::size_t i) { out[i] = fn(i); });
  return out;
}

}  // namespace geomap
