#include "c2f/ensemble.hpp"

#include <cmath>
#include <stdexcept>

#include "c2f/ops.hpp"

namespace c2f {

EnsembleWeights EnsembleWeights::uniform(std::size_t layers) {
  if (layers == 0) throw std::invalid_argument("ensemble needs at least one layer");
  return {std::vector<double>(layers, 1.0 / static_cast<double>(layers))};
}

void EnsembleWeights::validate() const {
  if (alpha.empty()) throw std::invalid_argument("ensemble weights are empty");
  double total = 0.0;
  for (double a : alpha) {
    if (!(a > 0.0)) throw std::invalid_argument("ensemble weights must be positive");
    total += a;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("ensemble weights must sum to 1");
}

Tensor c2f_ensemble(std::span<const Tensor> probs, const EnsembleWeights& alpha) {
  alpha.validate();
  if (probs.size() != alpha.alpha.size()) {
    throw ShapeError("ensemble has " + std::to_string(alpha.alpha.size()) + " weights for " +
                     std::to_string(probs.size()) + " decoder outputs");
  }
  Tensor out = Tensor::zeros_like(probs[0]);
  for (std::size_t u = 0; u < probs.size(); ++u) {
    if (!probs[u].same_shape(out)) throw ShapeError("ensemble inputs differ in shape");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += alpha.alpha[u] * probs[u][i];
  }
  return out;
}

Var c2f_ensemble(Graph& g, std::span<const Var> probs, Var weights) {
  return ops::weighted_sum(g, probs, weights);
}

std::vector<int> predict(const Tensor& probs) {
  if (probs.ndim() != 2) throw ShapeError("predict expects [C x T], got " + probs.shape_string());
  const std::size_t C = probs.dim(0), T = probs.dim(1);
  std::vector<int> out(T, 0);
  for (std::size_t t = 0; t < T; ++t) {
    double best = probs(0, t);
    for (std::size_t k = 1; k < C; ++k) {
      if (probs(k, t) > best) {
        best = probs(k, t);
        out[t] = static_cast<int>(k);
      }
    }
  }
  return out;
}

}  // namespace c2f
