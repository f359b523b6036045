#include "s3t/error.hpp"
#include "s3t/numcore.hpp"

#include <algorithm>

namespace s3t::num {

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape() != this) throw UsageError("operation mixes variables from different tapes");
    needs = needs || nodes_[in.node_id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(Var v) {
  Node& node = nodes_[v.node_id()];
  if (node.grad.empty()) node.grad = Tensor(node.value.shape(), 0.0);
  return node.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw UsageError("backward called with a variable from another tape");
  if (loss.value().size() != 1) {
    throw UsageError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  const std::size_t root = loss.node_id();
  for (std::size_t i = 0; i <= root; ++i) {
    Node& node = nodes_[i];
    if (node.requires_grad) node.grad = Tensor(node.value.shape(), 0.0);
  }
  if (!nodes_[root].requires_grad) return;
  nodes_[root].grad[0] = 1.0;
  for (std::size_t i = root + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.backward) node.backward(*this, node.grad);
  }
}

}  // namespace s3t::num
