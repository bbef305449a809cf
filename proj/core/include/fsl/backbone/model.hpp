#pragma once

#include <cstddef>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fsl/datakit/rng.hpp"
#include "fsl/ndgrad/graph.hpp"
#include "fsl/ndgrad/optim.hpp"

namespace fsl::backbone {

using ndgrad::Parameter;
using ndgrad::Tensor;
using ndgrad::Var;

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEps = 1e-5;

/// How batch-norm layers obtain their statistics.
enum class NormMode {
  kTrain,       ///< batch statistics; running statistics are updated
  kBatchStats,  ///< batch statistics; running statistics are left alone
  kEval,        ///< running statistics
};

struct Linear {
  Parameter weight;  ///< (in, out)
  Parameter bias;    ///< (out)
  friend bool operator==(const Linear& a, const Linear& b) {
    return a.weight.value == b.weight.value && a.bias.value == b.bias.value;
  }
};

struct BatchNorm {
  Parameter scale;  ///< decay exempt
  Parameter shift;  ///< decay exempt
  std::vector<double> running_mean;
  std::vector<double> running_var;
  friend bool operator==(const BatchNorm& a, const BatchNorm& b) {
    return a.scale.value == b.scale.value && a.shift.value == b.shift.value &&
           a.running_mean == b.running_mean && a.running_var == b.running_var;
  }
};

struct HiddenBlock {
  Linear linear;
  BatchNorm norm;
  friend bool operator==(const HiddenBlock&, const HiddenBlock&) = default;
};

struct Architecture {
  std::size_t input_dim = 16;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t num_classes = 0;
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Lazily maps parameters to graph leaves. Frozen parameters enter the graph
/// as constants and receive zero gradients.
class ParameterBinder {
 public:
  explicit ParameterBinder(ndgrad::Graph& graph) : graph_(graph) {}

  ndgrad::Graph& graph() noexcept { return graph_; }
  void freeze(const Parameter& p) { frozen_.insert(&p); }
  Var bind(const Parameter& p);
  /// One gradient per parameter, zero-filled where none was recorded.
  std::vector<Tensor> gradients(std::span<Parameter* const> params,
                                const ndgrad::Gradients& grads) const;

 private:
  ndgrad::Graph& graph_;
  std::unordered_map<const Parameter*, Var> vars_;
  std::unordered_set<const Parameter*> frozen_;
};

/// MLP backbone: input -> [linear -> batch-norm -> ReLU] x depth -> linear
/// logits over the meta-training classes.
class Backbone {
 public:
  struct Outputs {
    Var features;  ///< penultimate activations (after the last ReLU)
    Var logits;
  };

  Backbone(Architecture arch, std::vector<HiddenBlock> blocks, Linear output);

  /// He-normal hidden weights, N(0, 0.01^2) output weights, zero biases,
  /// unit batch-norm scale and running variance.
  static Backbone initialize(const Architecture& arch, datakit::CounterRng& rng);

  const Architecture& architecture() const noexcept { return arch_; }
  std::size_t input_dim() const noexcept { return arch_.input_dim; }
  std::size_t num_classes() const noexcept { return arch_.num_classes; }
  std::size_t feature_dim() const noexcept;

  const std::vector<HiddenBlock>& blocks() const noexcept { return blocks_; }
  std::vector<HiddenBlock>& blocks() noexcept { return blocks_; }
  const Linear& output() const noexcept { return output_; }
  Linear& output() noexcept { return output_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  /// Records the forward pass. kTrain mode updates running statistics, so
  /// the method is non-const.
  Outputs forward(ParameterBinder& binder, Var x, NormMode mode);

  /// Gradient-free eval-mode logits for an (n, input_dim) batch.
  Tensor logits(const Tensor& x) const;

  friend bool operator==(const Backbone&, const Backbone&) = default;

 private:
  void validate() const;

  Architecture arch_;
  std::vector<HiddenBlock> blocks_;
  Linear output_;
};

}  // namespace fsl::backbone
