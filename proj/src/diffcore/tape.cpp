#include "diffcore/tape.hpp"

#include <algorithm>

#include "common/error.hpp"

namespace whdspot::diff {

Variable::Variable(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
  if (requires_grad) node_->grad = Tensor(node_->value.shape());
}

Tensor& Variable::grad() const {
  if (node_->grad.shape() != node_->value.shape()) node_->grad = Tensor(node_->value.shape());
  return node_->grad;
}

void Variable::zero_grad() const {
  if (node_->grad.shape() != node_->value.shape())
    node_->grad = Tensor(node_->value.shape());
  else
    node_->grad.fill(0.0);
}

void accumulate(const Variable& v, const Tensor& delta) {
  if (!v.requires_grad()) return;
  Tensor& g = v.grad();
  auto dst = g.data();
  auto src = delta.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Variable Tape::emit(std::string kind, const std::vector<Variable>& inputs, Tensor value, BackwardFn backward) {
  const bool needs = recording_ && std::any_of(inputs.begin(), inputs.end(),
                                               [](const Variable& v) { return v.requires_grad(); });
  Variable out(std::move(value), false);
  if (!needs) return out;
  out.node_->requires_grad = true;
  out.node_->node_id = next_id_++;
  Op op;
  op.kind = std::move(kind);
  op.output_id = out.node_->node_id;
  op.output = out;
  for (const auto& in : inputs) {
    op.input_ids.push_back(in.requires_grad() ? in.node_id() : -1);
    if (in.requires_grad() && in.node_id() < 0) op.inputs.push_back(in);
  }
  op.backward = std::move(backward);
  ops_.push_back(std::move(op));
  return out;
}

std::size_t Tape::backward(const Variable& root) {
  require(root.defined(), "backward: undefined root");
  require(root.size() == 1, "backward: root must be a scalar, shape is " + to_string(root.shape()));
  if (!root.requires_grad()) {
    ops_.clear();
    return 0;
  }
  // Stage leaf gradients so this pass accumulates from zero.
  std::vector<std::pair<Variable, Tensor>> staged;
  for (const auto& op : ops_)
    for (const auto& leaf : op.inputs) {
      if (leaf.node_->node_id == -2) continue;
      leaf.node_->node_id = -2;
      staged.emplace_back(leaf, std::move(leaf.node_->grad));
      leaf.node_->grad = Tensor();
    }
  root.grad()[0] += 1.0;
  std::size_t visited = 0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    ++visited;
    if (!it->output.has_grad()) continue;  // unreachable from root
    it->backward(it->output.grad());
  }
  for (auto& [leaf, before] : staged) {
    leaf.node_->node_id = -1;
    if (before.shape() != leaf.value().shape()) continue;
    auto g = leaf.grad().data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = before[i] + g[i];
  }
  ops_.clear();
  return visited;
}

}  // namespace whdspot::diff
