#include "c2f/graph.hpp"

namespace c2f {

std::size_t Graph::check(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw std::out_of_range("invalid graph handle " + std::to_string(v.id));
  }
  return static_cast<std::size_t>(v.id);
}

Var Graph::constant(Tensor value) {
  require_finite(value, "graph constant");
  Node n;
  n.value = std::move(value);
  n.leaf = true;
  n.op = "constant";
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Graph::variable(Tensor value) {
  require_finite(value, "graph variable");
  Node n;
  n.grad = Tensor::zeros_like(value);
  n.value = std::move(value);
  n.requires_grad = true;
  n.leaf = true;
  n.op = "variable";
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Graph::parameter(Parameter& param) {
  require_finite(param.value, "parameter " + param.name);
  if (!param.grad.same_shape(param.value)) param.grad = Tensor::zeros_like(param.value);
  Node n;
  n.value = param.value;
  n.grad = Tensor::zeros_like(param.value);
  n.requires_grad = true;
  n.leaf = true;
  n.param = &param;
  n.op = "parameter";
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Graph::record(Tensor value, std::vector<Var> inputs, BackwardFn fn, const char* op_name) {
  require_finite(value, std::string("forward of ") + op_name);
  Node n;
  n.value = std::move(value);
  n.op = op_name;
  for (Var in : inputs) {
    const auto idx = check(in);
    n.inputs.push_back(static_cast<int>(idx));
    n.requires_grad = n.requires_grad || nodes_[idx].requires_grad;
  }
  if (n.requires_grad) n.fn = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Tensor* Graph::grad_buffer(Var v) {
  auto& n = nodes_.at(check(v));
  if (!n.requires_grad) return nullptr;
  if (!n.grad.same_shape(n.value)) n.grad = Tensor::zeros_like(n.value);
  return &n.grad;
}

void Graph::backward(Var loss) {
  const auto root = check(loss);
  if (nodes_[root].value.size() != 1) {
    throw ShapeError("backward requires a scalar loss, got " + nodes_[root].value.shape_string());
  }
  if (!nodes_[root].requires_grad) return;

  // Interior gradients are rebuilt on every call; leaf gradients accumulate.
  for (auto& n : nodes_) {
    if (!n.requires_grad) continue;
    if (!n.leaf || n.param) {
      n.grad = Tensor::zeros_like(n.value);
    }
  }
  nodes_[root].grad.fill(1.0);

  for (std::size_t i = root + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.leaf || !n.fn) continue;
    // Backward functions only write into input buffers, never their own.
    n.fn(*this, n.value, n.grad);
  }

  for (auto& n : nodes_) {
    if (!n.param) continue;
    require_finite(n.grad, "gradient of " + n.param->name);
    auto dst = n.param->grad.data();
    auto src = n.grad.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

}  // namespace c2f
