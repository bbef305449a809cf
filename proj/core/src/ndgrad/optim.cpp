#include "fsl/ndgrad/optim.hpp"

#include <cmath>

#include "fsl/error.hpp"

namespace fsl::ndgrad {

OptimizerState OptimizerState::sgd(SgdOptions options) {
  OptimizerState state;
  state.kind_ = OptimizerKind::kSgdNesterov;
  state.sgd_ = options;
  return state;
}

OptimizerState OptimizerState::adam(AdamOptions options) {
  OptimizerState state;
  state.kind_ = OptimizerKind::kAdam;
  state.adam_ = options;
  return state;
}

void OptimizerState::ensure_slots(std::span<Parameter* const> params) {
  if (first_.empty()) {
    for (const Parameter* p : params) {
      first_.emplace_back(p->value.shape(), 0.0);
      if (kind_ == OptimizerKind::kAdam) second_.emplace_back(p->value.shape(), 0.0);
    }
    return;
  }
  if (first_.size() != params.size()) {
    throw DimensionError("optimizer holds " + std::to_string(first_.size()) + " slots but got " +
                         std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (first_[i].shape() != params[i]->value.shape()) {
      throw DimensionError("optimizer slot shape mismatch for parameter '" + params[i]->name + "'");
    }
  }
}

void OptimizerState::step(std::span<Parameter* const> params, std::span<const Tensor> grads,
                          double lr) {
  if (params.size() != grads.size()) {
    throw DimensionError("step: " + std::to_string(params.size()) + " parameters vs " +
                         std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i]->value.shape()) {
      throw DimensionError("gradient shape " + shape_to_string(grads[i].shape()) +
                           " does not match parameter '" + params[i]->name + "'");
    }
    if (strict && !grads[i].all_finite()) {
      throw NumericError("non-finite gradient for parameter '" + params[i]->name + "'");
    }
  }
  ensure_slots(params);
  ++steps_;

  if (kind_ == OptimizerKind::kSgdNesterov) {
    const double mu = sgd_.momentum;
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter& p = *params[i];
      const double wd = p.decay_exempt ? 0.0 : sgd_.weight_decay;
      Tensor& v = first_[i];
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double g = grads[i][k] + wd * p.value[k];
        v[k] = mu * v[k] + g;
        const double update = sgd_.nesterov ? g + mu * v[k] : v[k];
        p.value[k] -= lr * update;
      }
    }
    return;
  }

  const double b1 = adam_.beta1;
  const double b2 = adam_.beta2;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(b1, t);
  const double correction2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    const double wd = p.decay_exempt ? 0.0 : adam_.weight_decay;
    Tensor& m = first_[i];
    Tensor& s = second_[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = grads[i][k] + wd * p.value[k];
      m[k] = b1 * m[k] + (1.0 - b1) * g;
      s[k] = b2 * s[k] + (1.0 - b2) * g * g;
      const double m_hat = m[k] / correction1;
      const double s_hat = s[k] / correction2;
      p.value[k] -= lr * m_hat / (std::sqrt(s_hat) + adam_.eps);
    }
  }
}

}  // namespace fsl::ndgrad
