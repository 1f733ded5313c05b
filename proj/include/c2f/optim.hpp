#pragma once

#include <vector>

#include "c2f/graph.hpp"

namespace c2f {

struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 0.0;  // decoupled from the gradient (AdamW)
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with decoupled weight decay over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);

  /// Applies one update from the accumulated `grad` of every parameter.
  void step();
  void zero_grad();

  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  long steps() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  AdamConfig cfg_;
  long t_ = 0;
};

}  // namespace c2f
