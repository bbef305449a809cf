#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fsl/ndgrad/tensor.hpp"

namespace fsl::ndgrad {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its graph lives.
class Var {
 public:
  Var() = default;

  Graph& graph() const { return *graph_; }
  std::size_t index() const noexcept { return index_; }
  bool valid() const noexcept { return graph_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t index) : graph_(graph), index_(index) {}

  Graph* graph_ = nullptr;
  std::size_t index_ = 0;
};

struct GraphOptions {
  /// Raise NumericError as soon as an op produces a non-finite value.
  bool strict = true;
};

/// Gradients of a scalar loss with respect to every node that required one.
class Gradients {
 public:
  bool has(Var v) const;
  /// Gradient of `v`; throws ContractError if `v` did not require a gradient.
  const Tensor& operator[](Var v) const;

 private:
  friend class Graph;
  std::vector<std::optional<Tensor>> grads_;
};

/// Tape of operations in topological (creation) order.
///
/// Backward functions receive the upstream gradient and one accumulation
/// buffer per input; the buffer is null when that input needs no gradient.
/// Fan-out accumulates by summation.
class Graph {
 public:
  using BackwardFn = std::function<void(const Tensor& upstream, std::span<Tensor* const> input_grads)>;

  explicit Graph(GraphOptions options = {});
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf whose gradient flag is taken from the tensor.
  Var leaf(Tensor value);
  Var parameter(Tensor value);
  Var constant(Tensor value);

  Var record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  std::string_view op_name(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  bool strict() const noexcept { return options_.strict; }

  /// Reverse pass from a scalar loss. Releases the saved backward context, so
  /// a graph supports exactly one backward call.
  Gradients backward(Var loss);

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  void check_owner(Var v) const;

  GraphOptions options_;
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace fsl::ndgrad
