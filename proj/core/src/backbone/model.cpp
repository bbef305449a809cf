#include "fsl/backbone/model.hpp"

#include <cmath>
#include <string>

#include "fsl/error.hpp"
#include "fsl/ndgrad/ops.hpp"

namespace fsl::backbone {

namespace nd = ndgrad;

Var ParameterBinder::bind(const Parameter& p) {
  auto it = vars_.find(&p);
  if (it != vars_.end()) return it->second;
  Var v = frozen_.contains(&p) ? graph_.constant(p.value) : graph_.parameter(p.value);
  vars_.emplace(&p, v);
  return v;
}

std::vector<Tensor> ParameterBinder::gradients(std::span<Parameter* const> params,
                                               const nd::Gradients& grads) const {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const Parameter* p : params) {
    auto it = vars_.find(p);
    if (it != vars_.end() && grads.has(it->second)) {
      out.push_back(grads[it->second]);
    } else {
      out.emplace_back(p->value.shape(), 0.0);
    }
  }
  return out;
}

Backbone::Backbone(Architecture arch, std::vector<HiddenBlock> blocks, Linear output)
    : arch_(std::move(arch)), blocks_(std::move(blocks)), output_(std::move(output)) {
  validate();
}

void Backbone::validate() const {
  if (arch_.input_dim == 0 || arch_.num_classes == 0) {
    throw DimensionError("backbone needs positive input and output dimensions");
  }
  if (blocks_.size() != arch_.hidden.size()) {
    throw DimensionError("backbone block count does not match architecture");
  }
  std::size_t in = arch_.input_dim;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::size_t out = arch_.hidden[i];
    const HiddenBlock& b = blocks_[i];
    if (b.linear.weight.value.shape() != nd::Shape{in, out} ||
        b.linear.bias.value.shape() != nd::Shape{out} ||
        b.norm.scale.value.shape() != nd::Shape{out} ||
        b.norm.shift.value.shape() != nd::Shape{out} || b.norm.running_mean.size() != out ||
        b.norm.running_var.size() != out) {
      throw DimensionError("hidden block " + std::to_string(i) + " does not chain from width " +
                           std::to_string(in) + " to " + std::to_string(out));
    }
    if (!b.norm.scale.decay_exempt || !b.norm.shift.decay_exempt) {
      throw ContractError("batch-norm parameters must be decay exempt");
    }
    in = out;
  }
  if (output_.weight.value.shape() != nd::Shape{in, arch_.num_classes} ||
      output_.bias.value.shape() != nd::Shape{arch_.num_classes}) {
    throw DimensionError("output layer does not map width " + std::to_string(in) + " to " +
                         std::to_string(arch_.num_classes) + " classes");
  }
}

Backbone Backbone::initialize(const Architecture& arch, datakit::CounterRng& rng) {
  std::vector<HiddenBlock> blocks;
  std::size_t in = arch.input_dim;
  for (std::size_t i = 0; i < arch.hidden.size(); ++i) {
    const std::size_t out = arch.hidden[i];
    const std::string prefix = "block" + std::to_string(i) + ".";
    HiddenBlock b;
    b.linear.weight = {prefix + "weight", Tensor(nd::Shape{in, out}), false};
    const double stddev = std::sqrt(2.0 / static_cast<double>(in));
    for (double& w : b.linear.weight.value.data()) w = rng.normal(0.0, stddev);
    b.linear.bias = {prefix + "bias", Tensor(nd::Shape{out}), false};
    b.norm.scale = {prefix + "bn_scale", Tensor(nd::Shape{out}, 1.0), true};
    b.norm.shift = {prefix + "bn_shift", Tensor(nd::Shape{out}), true};
    b.norm.running_mean.assign(out, 0.0);
    b.norm.running_var.assign(out, 1.0);
    blocks.push_back(std::move(b));
    in = out;
  }
  Linear head;
  head.weight = {"output.weight", Tensor(nd::Shape{in, arch.num_classes}), false};
  for (double& w : head.weight.value.data()) w = rng.normal(0.0, 0.01);
  head.bias = {"output.bias", Tensor(nd::Shape{arch.num_classes}), false};
  return Backbone(arch, std::move(blocks), std::move(head));
}

std::size_t Backbone::feature_dim() const noexcept {
  return arch_.hidden.empty() ? arch_.input_dim : arch_.hidden.back();
}

std::vector<Parameter*> Backbone::parameters() {
  std::vector<Parameter*> out;
  for (HiddenBlock& b : blocks_) {
    out.insert(out.end(), {&b.linear.weight, &b.linear.bias, &b.norm.scale, &b.norm.shift});
  }
  out.insert(out.end(), {&output_.weight, &output_.bias});
  return out;
}

std::vector<const Parameter*> Backbone::parameters() const {
  std::vector<const Parameter*> out;
  for (const HiddenBlock& b : blocks_) {
    out.insert(out.end(), {&b.linear.weight, &b.linear.bias, &b.norm.scale, &b.norm.shift});
  }
  out.insert(out.end(), {&output_.weight, &output_.bias});
  return out;
}

Backbone::Outputs Backbone::forward(ParameterBinder& binder, Var x, NormMode mode) {
  // Copy: the graph's node storage may move as the pass records new nodes.
  const nd::Shape shape = x.shape();
  if (shape.size() != 2 || shape[1] != arch_.input_dim) {
    throw DimensionError("backbone expects (n, " + std::to_string(arch_.input_dim) +
                         ") inputs, got " + nd::shape_to_string(shape));
  }
  Var h = x;
  for (HiddenBlock& b : blocks_) {
    Var z = nd::add(nd::matmul(h, binder.bind(b.linear.weight)), binder.bind(b.linear.bias));
    Var scale = binder.bind(b.norm.scale);
    Var shift = binder.bind(b.norm.shift);
    if (mode == NormMode::kEval) {
      z = nd::batch_norm_eval(z, scale, shift, b.norm.running_mean, b.norm.running_var,
                              kBatchNormEps);
    } else {
      nd::BatchNormStats stats;
      z = nd::batch_norm_train(z, scale, shift, kBatchNormEps, &stats);
      if (mode == NormMode::kTrain) {
        const double n = static_cast<double>(shape[0]);
        const double unbias = n > 1 ? n / (n - 1.0) : 1.0;
        for (std::size_t j = 0; j < stats.mean.size(); ++j) {
          b.norm.running_mean[j] =
              (1.0 - kBatchNormMomentum) * b.norm.running_mean[j] + kBatchNormMomentum * stats.mean[j];
          b.norm.running_var[j] = (1.0 - kBatchNormMomentum) * b.norm.running_var[j] +
                                  kBatchNormMomentum * stats.variance[j] * unbias;
        }
      }
    }
    h = nd::relu(z);
  }
  Var logits = nd::add(nd::matmul(h, binder.bind(output_.weight)), binder.bind(output_.bias));
  return {h, logits};
}

Tensor Backbone::logits(const Tensor& x) const {
  nd::Graph g;
  ParameterBinder binder(g);
  // Eval mode never touches running statistics.
  auto& self = const_cast<Backbone&>(*this);
  for (const Parameter* p : parameters()) binder.freeze(*p);
  return self.forward(binder, g.constant(x), NormMode::kEval).logits.value();
}

}  // namespace fsl::backbone
