#include "fsl/ndgrad/graph.hpp"

#include <utility>

#include "fsl/error.hpp"

namespace fsl::ndgrad {

const Tensor& Var::value() const {
  if (graph_ == nullptr) throw ContractError("value() on an unbound Var");
  return graph_->value(*this);
}

bool Gradients::has(Var v) const {
  return v.index() < grads_.size() && grads_[v.index()].has_value();
}

const Tensor& Gradients::operator[](Var v) const {
  if (!has(v)) {
    throw ContractError("no gradient recorded for node " + std::to_string(v.index()));
  }
  return *grads_[v.index()];
}

Graph::Graph(GraphOptions options) : options_(options) {}

Var Graph::leaf(Tensor value) {
  if (options_.strict && !value.all_finite()) throw NumericError("non-finite leaf value");
  Node node;
  node.op = value.requires_grad() ? "parameter" : "constant";
  node.requires_grad = value.requires_grad();
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Tensor value) { return leaf(std::move(value.set_requires_grad(true))); }

Var Graph::constant(Tensor value) { return leaf(std::move(value.set_requires_grad(false))); }

Var Graph::record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (consumed_) throw ContractError("graph already consumed by backward()");
  if (options_.strict && !value.all_finite()) {
    throw NumericError("non-finite output from op '" + std::string(op) + "'");
  }
  Node node;
  node.op = std::string(op);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    check_owner(in);
    node.inputs.push_back(in.index());
    node.requires_grad = node.requires_grad || nodes_[in.index()].requires_grad;
  }
  value.set_requires_grad(node.requires_grad);
  node.value = std::move(value);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Graph::value(Var v) const {
  check_owner(v);
  return nodes_[v.index()].value;
}

bool Graph::requires_grad(Var v) const {
  check_owner(v);
  return nodes_[v.index()].requires_grad;
}

std::string_view Graph::op_name(Var v) const {
  check_owner(v);
  return nodes_[v.index()].op;
}

void Graph::check_owner(Var v) const {
  if (!v.valid() || &v.graph() != this || v.index() >= nodes_.size()) {
    throw ContractError("Var does not belong to this graph");
  }
}

Gradients Graph::backward(Var loss) {
  check_owner(loss);
  if (consumed_) throw ContractError("graph already consumed by backward()");
  const Tensor& loss_value = nodes_[loss.index()].value;
  if (loss_value.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_to_string(loss_value.shape()));
  }

  Gradients result;
  result.grads_.resize(nodes_.size());
  if (nodes_[loss.index()].requires_grad) {
    result.grads_[loss.index()] = Tensor(loss_value.shape(), 1.0);
  }

  std::vector<Tensor*> buffers;
  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!result.grads_[i].has_value() || !node.backward) continue;
    buffers.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      auto& slot = result.grads_[in];
      if (!slot.has_value()) slot = Tensor(nodes_[in].value.shape(), 0.0);
      buffers[k] = &*slot;
    }
    node.backward(*result.grads_[i], buffers);
  }

  for (Node& node : nodes_) node.backward = nullptr;
  consumed_ = true;

  // Interior gradients are released; only leaves are of interest to callers.
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].inputs.empty()) result.grads_[i].reset();
  }
  return result;
}

}  // namespace fsl::ndgrad
