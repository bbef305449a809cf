#include "fsl/ndgrad/schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "fsl/error.hpp"

namespace fsl::ndgrad {

LrSchedule::LrSchedule(std::vector<LrCycle> cycles) : cycles_(std::move(cycles)) {
  if (cycles_.empty()) throw ContractError("learning-rate schedule needs at least one cycle");
  for (const LrCycle& c : cycles_) {
    if (c.epochs == 0) throw ContractError("learning-rate cycle of zero epochs");
    if (!(c.start_lr > 0.0) || !(c.end_lr >= 0.0) || c.end_lr > c.start_lr) {
      throw ContractError("learning-rate cycle must satisfy start >= end >= 0, start > 0");
    }
    total_ += c.epochs;
  }
}

LrSchedule LrSchedule::cyclic(const std::vector<std::size_t>& cycle_epochs, double end_lr) {
  std::vector<LrCycle> cycles;
  for (std::size_t i = 0; i < cycle_epochs.size(); ++i) {
    cycles.push_back({std::pow(10.0, -static_cast<double>(i + 1)), end_lr, cycle_epochs[i]});
  }
  return LrSchedule(std::move(cycles));
}

std::vector<std::size_t> LrSchedule::cycle_starts() const {
  std::vector<std::size_t> starts;
  std::size_t at = 0;
  for (const LrCycle& c : cycles_) {
    starts.push_back(at);
    at += c.epochs;
  }
  return starts;
}

double LrSchedule::lr_at(std::size_t epoch, double step_fraction) const {
  if (!(step_fraction >= 0.0 && step_fraction <= 1.0)) {
    throw RangeError("step fraction must lie in [0, 1]");
  }
  const double position = static_cast<double>(epoch) + step_fraction;
  if (position > static_cast<double>(total_)) {
    throw RangeError("epoch " + std::to_string(epoch) + " beyond schedule of " +
                     std::to_string(total_) + " epochs");
  }
  double begin = 0.0;
  for (std::size_t i = 0; i < cycles_.size(); ++i) {
    const LrCycle& c = cycles_[i];
    const double length = static_cast<double>(c.epochs);
    const bool last = i + 1 == cycles_.size();
    if (position < begin + length || last) {
      const double t = position - begin;
      return c.end_lr + (c.start_lr - c.end_lr) * (1.0 + std::cos(std::numbers::pi * t / length)) / 2.0;
    }
    begin += length;
  }
  return cycles_.back().end_lr;
}

}  // namespace fsl::ndgrad
