#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <string>

namespace h2ulv {

// Analytic flop accounting. Every linalg kernel reports its operation count
// to the tally of the phase that is current on the calling thread.
enum class Phase : int {
  assemble = 0,
  fills,
  basis,
  skeleton,
  factorize,
  solve,
  oracle,
  other,
  count_
};

const char* phase_name(Phase p);

class FlopCounter {
 public:
  static FlopCounter& instance();

  void add(uint64_t n);
  uint64_t phase_total(Phase p) const;
  uint64_t total() const;
  void reset();

  // Kernel evaluations are tallied separately from flops.
  void add_kernel_evals(uint64_t n);
  uint64_t kernel_evals() const;

  // Wall time is attributed to the phase active on the thread that called
  // reset(); worker threads contribute flops but not time.
  double phase_seconds(Phase p) const;
  void note_phase_switch(Phase from);

 private:
  std::array<std::atomic<uint64_t>, static_cast<int>(Phase::count_)> tally_{};
  std::array<std::atomic<uint64_t>, static_cast<int>(Phase::count_)> nanos_{};
  std::atomic<uint64_t> kernel_evals_{0};
};

// Current phase is thread-local so parallel workers inherit it explicitly.
Phase current_phase();
void set_current_phase(Phase p);

struct PhaseScope {
  explicit PhaseScope(Phase p) : prev(current_phase()) { set_current_phase(p); }
  ~PhaseScope() { set_current_phase(prev); }
  Phase prev;
};

inline void count_flops(uint64_t n) { FlopCounter::instance().add(n); }

}  // namespace h2ulv
