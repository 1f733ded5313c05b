#pragma once

#include <span>
#include <vector>

#include "c2f/graph.hpp"

namespace c2f {

/// Convex per-decoder weights for the coarse-to-fine ensemble.
struct EnsembleWeights {
  std::vector<double> alpha;

  static EnsembleWeights uniform(std::size_t layers);
  /// All weights positive and summing to 1 within 1e-9.
  void validate() const;
};

/// sum_u alpha_u * probs[u] over [C x T] probability maps of equal shape.
Tensor c2f_ensemble(std::span<const Tensor> probs, const EnsembleWeights& alpha);

/// Graph form; `weights` is a [U x 1] value (see SegmentationHeads::ensemble_weights).
Var c2f_ensemble(Graph& g, std::span<const Var> probs, Var weights);

/// Per-frame argmax of a [C x T] map; ties go to the smallest class id.
std::vector<int> predict(const Tensor& probs);

}  // namespace c2f
