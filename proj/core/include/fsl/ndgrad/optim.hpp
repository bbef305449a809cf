#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fsl/ndgrad/tensor.hpp"

namespace fsl::ndgrad {

/// A trainable tensor with its optimizer-facing metadata.
struct Parameter {
  std::string name;
  Tensor value;
  /// Excluded from weight decay (batch-norm scale and shift).
  bool decay_exempt = false;
};

struct SgdOptions {
  double momentum = 0.9;
  double weight_decay = 1e-4;
  bool nesterov = true;
  friend bool operator==(const SgdOptions&, const SgdOptions&) = default;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  friend bool operator==(const AdamOptions&, const AdamOptions&) = default;
};

enum class OptimizerKind { kSgdNesterov, kAdam };

/// Per-parameter optimizer slots plus hyper-parameters.
///
/// Slots are created on the first step from the parameter shapes; later
/// steps must pass parameters of identical shapes in identical order.
class OptimizerState {
 public:
  static OptimizerState sgd(SgdOptions options = {});
  static OptimizerState adam(AdamOptions options = {});

  OptimizerKind kind() const noexcept { return kind_; }
  std::uint64_t step_count() const noexcept { return steps_; }

  /// Applies one update with learning rate `lr`. Weight decay is added to the
  /// gradient (coupled, L2 regularizer) for non-exempt parameters.
  void step(std::span<Parameter* const> params, std::span<const Tensor> grads, double lr);

  /// Validates grads for non-finite values before step (strict mode).
  bool strict = true;

 private:
  OptimizerState() = default;
  void ensure_slots(std::span<Parameter* const> params);

  OptimizerKind kind_ = OptimizerKind::kSgdNesterov;
  SgdOptions sgd_;
  AdamOptions adam_;
  std::uint64_t steps_ = 0;
  std::vector<Tensor> first_;   // velocity for SGD, first moment for Adam
  std::vector<Tensor> second_;  // Adam second moment
};

}  // namespace fsl::ndgrad
