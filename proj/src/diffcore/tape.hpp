#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "diffcore/tensor.hpp"

namespace whdspot::diff {

enum class Precision { f64, f32 };

// Shared handle to a value and its gradient. Copies alias the same storage.
class Variable {
 public:
  Variable() = default;
  explicit Variable(Tensor value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  std::int64_t node_id() const { return node_->node_id; }

  // Gradient buffer, zero-filled on first access. Variable is a handle, so
  // this is available through const references too.
  Tensor& grad() const;
  bool has_grad() const { return !node_->grad.empty() || node_->value.empty(); }
  void zero_grad() const;

  bool same_node(const Variable& other) const { return node_ == other.node_; }

 private:
  friend class Tape;
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::int64_t node_id = -1;
  };
  std::shared_ptr<Node> node_;
};

// Ordered record of primitive operations for reverse-mode differentiation.
// A tape and the variables it produces belong to one thread.
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& out_grad)>;

  struct Op {
    std::string kind;
    std::vector<std::int64_t> input_ids;  // -1 for leaves
    std::vector<Variable> inputs;
    std::int64_t output_id = -1;
    Variable output;
    BackwardFn backward;
  };

  explicit Tape(Precision precision = Precision::f64, bool recording = true)
      : precision_(precision), recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Precision precision() const { return precision_; }
  bool recording() const { return recording_; }

  // Wraps `value` as the output of an operation over `inputs`. The backward
  // closure is kept only when recording and some input requires a gradient.
  Variable emit(std::string kind, const std::vector<Variable>& inputs, Tensor value, BackwardFn backward);

  // Accumulates d(root)/d(v) into every requires-grad variable reachable from
  // root, then clears the tape. Returns the number of operations visited.
  // Each leaf receives this pass's total in a single addition, so repeating
  // an identical pass without zeroing doubles gradients exactly.
  std::size_t backward(const Variable& root);

  const std::vector<Op>& ops() const { return ops_; }
  void clear() { ops_.clear(); }

 private:
  Precision precision_;
  bool recording_;
  std::int64_t next_id_ = 0;
  std::vector<Op> ops_;
};

// Adds `delta` into v's gradient when v requires one.
void accumulate(const Variable& v, const Tensor& delta);

}  // namespace whdspot::diff
