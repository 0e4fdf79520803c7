#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "pixio/tensor.hpp"

namespace pixio::inline PIXIO_PRECISION_NS {

struct Node {
  Tensor value;
  Tensor grad;  // empty until first accumulation
  bool requires_grad = false;
};

/// Shared handle to a value that may take part in differentiation.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  static Var constant(Tensor value) { return Var(std::move(value), false); }
  static Var parameter(Tensor value) { return Var(std::move(value), true); }

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  /// Gradient buffer, allocated as zeros on first use.
  Tensor& grad_buffer() const;
  void zero_grad() const;

  explicit operator bool() const { return static_cast<bool>(node_); }
  const Node* node() const { return node_.get(); }

 private:
  friend class Graph;
  std::shared_ptr<Node> node_;
};

/// Tape of executed operations. Ops append a backward closure when at least
/// one input requires a gradient and the graph is recording; `backward`
/// replays the closures in reverse execution order.
class Graph {
 public:
  using BackwardFn = std::function<void(const Tensor& out_grad)>;

  explicit Graph(bool recording = true) : recording_(recording) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return recording_; }
  /// True when an op over `inputs` must save state for backward.
  bool tracks(std::initializer_list<const Var*> inputs) const;

  /// Wraps `value` as the op's output. Non-finite values raise NumericError.
  /// `backward` may be empty when nothing is tracked.
  Var record(std::string_view op, Tensor value, bool tracked, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates. Intermediate gradients are
  /// reset first, so calling twice accumulates twice into leaves.
  void backward(const Var& loss);

  std::size_t size() const { return tape_.size(); }
  /// Op names visited by the last backward call, in visit order.
  const std::vector<std::string>& last_backward_trace() const { return trace_; }
  std::vector<std::string> op_names() const;

 private:
  struct Entry {
    std::string op;
    Var output;
    BackwardFn backward;
  };
  bool recording_;
  std::vector<Entry> tape_;
  std::vector<std::string> trace_;
};

/// Throws NumericError naming `op` if `t` holds NaN/Inf.
void require_finite(const Tensor& t, std::string_view op);

}  // namespace pixio::inline PIXIO_PRECISION_NS
