#pragma once

#include <cstddef>
#include <vector>

namespace fsl::ndgrad {

struct LrCycle {
  double start_lr;
  double end_lr;
  std::size_t epochs;
};

/// Piecewise cosine annealing over consecutive cycles.
class LrSchedule {
 public:
  explicit LrSchedule(std::vector<LrCycle> cycles);

  /// Cycle i (1-based) starts at 10^-i and anneals to `end_lr`.
  static LrSchedule cyclic(const std::vector<std::size_t>& cycle_epochs, double end_lr = 1e-6);

  /// Learning rate at `epoch + step_fraction`, step_fraction in [0, 1].
  /// The position equal to total_epochs() is the end of the last cycle.
  double lr_at(std::size_t epoch, double step_fraction = 0.0) const;

  std::size_t total_epochs() const noexcept { return total_; }
  const std::vector<LrCycle>& cycles() const noexcept { return cycles_; }
  /// First epoch of each cycle.
  std::vector<std::size_t> cycle_starts() const;

 private:
  std::vector<LrCycle> cycles_;
  std::size_t total_ = 0;
};

}  // namespace fsl::ndgrad
