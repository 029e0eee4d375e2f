#include "h2ulv/flops.hpp"

#include <chrono>
#include <thread>

namespace h2ulv {

namespace {
std::thread::id g_timing_thread;
std::chrono::steady_clock::time_point g_last_switch;
}  // namespace

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::assemble: return "assemble";
    case Phase::fills: return "fill_precompute";
    case Phase::basis: return "basis";
    case Phase::skeleton: return "skeleton";
    case Phase::factorize: return "factorize";
    case Phase::solve: return "solve";
    case Phase::oracle: return "oracle";
    default: return "other";
  }
}

FlopCounter& FlopCounter::instance() {
  static FlopCounter counter;
  return counter;
}

namespace {
thread_local Phase t_phase = Phase::other;
}

Phase current_phase() { return t_phase; }

void set_current_phase(Phase p) {
  if (std::this_thread::get_id() == g_timing_thread && p != t_phase)
    FlopCounter::instance().note_phase_switch(t_phase);
  t_phase = p;
}

void FlopCounter::note_phase_switch(Phase from) {
  const auto now = std::chrono::steady_clock::now();
  const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(now - g_last_switch);
  nanos_[static_cast<int>(from)].fetch_add(static_cast<uint64_t>(ns.count()),
                                           std::memory_order_relaxed);
  g_last_switch = now;
}

double FlopCounter::phase_seconds(Phase p) const {
  return static_cast<double>(nanos_[static_cast<int>(p)].load(std::memory_order_relaxed)) * 1e-9;
}

void FlopCounter::add(uint64_t n) {
  tally_[static_cast<int>(t_phase)].fetch_add(n, std::memory_order_relaxed);
}

uint64_t FlopCounter::phase_total(Phase p) const {
  return tally_[static_cast<int>(p)].load(std::memory_order_relaxed);
}

uint64_t FlopCounter::total() const {
  uint64_t s = 0;
  for (const auto& t : tally_) s += t.load(std::memory_order_relaxed);
  return s;
}

void FlopCounter::reset() {
  for (auto& t : tally_) t.store(0, std::memory_order_relaxed);
  for (auto& t : nanos_) t.store(0, std::memory_order_relaxed);
  kernel_evals_.store(0, std::memory_order_relaxed);
  g_timing_thread = std::this_thread::get_id();
  g_last_switch = std::chrono::steady_clock::now();
}

void FlopCounter::add_kernel_evals(uint64_t n) {
  kernel_evals_.fetch_add(n, std::memory_order_relaxed);
}

uint64_t FlopCounter::kernel_evals() const {
  return kernel_evals_.load(std::memory_order_relaxed);
}

}  // namespace h2ulv
