#pragma once

#include <cstdint>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

#include "h2ulv/flops.hpp"

namespace h2ulv {

// Fork-join map over [0, n). Tasks must write to disjoint locations; the
// index partition is static so results cannot depend on scheduling. Workers
// inherit the caller's flop phase.
inline void parallel_for(int64_t n, int threads, const std::function<void(int64_t)>& fn) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  int nw = static_cast<int>(std::min<int64_t>(threads, n));
  Phase phase = current_phase();
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(nw);
  pool.reserve(nw);
  for (int w = 0; w < nw; ++w) {
    pool.emplace_back([&, w]() {
      set_current_phase(phase);
      try {
        for (int64_t i = w; i < n; i += nw) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace h2ulv
