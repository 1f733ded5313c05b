#pragma once

#include <functional>
#include <string>
#include <vector>

#include "c2f/tensor.hpp"

namespace c2f {

/// A trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}

  void zero_grad() { grad.fill(0.0); }
};

/// Handle to a value recorded in a Graph.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape. Nodes are appended in evaluation order; backward walks
/// them in reverse exactly once per call.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& out_value, const Tensor& out_grad)>;

  Var constant(Tensor value);
  /// Leaf whose gradient accumulates across backward calls until cleared.
  Var variable(Tensor value);
  /// Leaf bound to a parameter; backward adds into `param.grad`.
  Var parameter(Parameter& param);

  /// Records an op output. `fn` is dropped when no input needs a gradient.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn fn, const char* op_name);

  const Tensor& value(Var v) const { return nodes_.at(check(v)).value; }
  const Tensor& grad(Var v) const { return nodes_.at(check(v)).grad; }
  bool requires_grad(Var v) const { return nodes_.at(check(v)).requires_grad; }

  /// Gradient buffer of an input during backward, or nullptr when it needs none.
  Tensor* grad_buffer(Var v);

  void backward(Var loss);
  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> inputs;
    BackwardFn fn;
    bool requires_grad = false;
    bool leaf = false;
    Parameter* param = nullptr;
    const char* op = "";
  };

  std::size_t check(Var v) const;

  std::vector<Node> nodes_;
};

}  // namespace c2f
