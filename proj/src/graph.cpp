#include "pixio/graph.hpp"

namespace pixio::inline PIXIO_PRECISION_NS {

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor& Var::grad_buffer() const {
  if (node_->grad.empty() || !node_->grad.same_shape(node_->value)) {
    node_->grad = Tensor(node_->value.shape());
  }
  return node_->grad;
}

void Var::zero_grad() const {
  if (node_ && !node_->grad.empty()) node_->grad.fill(real(0));
}

void require_finite(const Tensor& t, std::string_view op) {
  if (!t.all_finite()) throw NumericError(std::string(op) + " produced non-finite values");
}

bool Graph::tracks(std::initializer_list<const Var*> inputs) const {
  if (!recording_) return false;
  for (const Var* v : inputs) {
    if (v && v->requires_grad()) return true;
  }
  return false;
}

Var Graph::record(std::string_view op, Tensor value, bool tracked, BackwardFn backward) {
  require_finite(value, op);
  Var out(std::move(value), tracked);
  if (tracked) {
    if (!backward) throw ContractError(std::string(op) + ": tracked op without backward");
    tape_.push_back(Entry{std::string(op), out, std::move(backward)});
  }
  return out;
}

void Graph::backward(const Var& loss) {
  if (!loss || loss.value().numel() != 1) {
    throw ContractError("backward requires a scalar loss");
  }
  if (!loss.requires_grad()) throw ContractError("loss does not depend on any parameter");
  for (auto& e : tape_) e.output.zero_grad();
  Var seed = loss;
  seed.grad_buffer()[0] = real(1);
  trace_.clear();
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    trace_.push_back(it->op);
    it->backward(it->output.grad());
  }
}

std::vector<std::string> Graph::op_names() const {
  std::vector<std::string> names;
  names.reserve(tape_.size());
  for (const auto& e : tape_) names.push_back(e.op);
  return names;
}

}  // namespace pixio::inline PIXIO_PRECISION_NS
