#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "c2f/model.hpp"
#include "c2f/rng.hpp"

namespace c2f {

/// Temporal feature augmentation: inputs are max-pooled over a window w drawn
/// from pi, which puts mass pi0 on w0 and spreads the rest uniformly over
/// {floor(w0/2), ..., 2 w0} \ {w0}.
struct AugmentConfig {
  std::size_t w0 = 10;
  double pi0 = 0.5;
  std::size_t tta_samples = 5;
  /// When false, training and inference both pool with the fixed window w0.
  bool enabled = true;

  void validate() const;
  std::size_t min_window() const { return w0 / 2; }
  std::size_t max_window() const { return 2 * w0; }
  /// Probability of drawing window w.
  double probability(std::size_t w) const;
};

/// [T x F] -> [ceil(T/w) x F], row t = max over frames [wt, wt+w) (last window truncated).
Tensor pool_features(const Tensor& frames, std::size_t w);

/// Window majority; ties go to the smallest class id.
std::vector<int> pool_labels(std::span<const int> labels, std::size_t w);

std::size_t sample_window(const AugmentConfig& cfg, Rng& rng);

/// Ensemble probabilities [C x T] of the input pooled by w, upsampled back
/// to the original T frames. Runs in eval mode. `layer` >= 0 selects a single
/// decoder output instead of the ensemble.
Tensor segment_probs(Backbone& backbone, SegmentationHeads& heads, const Tensor& frames, std::size_t w,
                     int layer = -1);
Tensor segment_probs(Model& model, const Tensor& frames, std::size_t w);

/// Monte-Carlo estimate of the expected prediction over pi.
Tensor tta_predict(Backbone& backbone, SegmentationHeads& heads, const Tensor& frames, const AugmentConfig& cfg,
                   Rng& rng, int layer = -1);
Tensor tta_predict(Model& model, const Tensor& frames, const AugmentConfig& cfg, Rng& rng);

/// Inference entry point: TTA when requested, otherwise the base window w0.
Tensor infer_probs(Backbone& backbone, SegmentationHeads& heads, const Tensor& frames, const AugmentConfig& cfg,
                   bool tta, Rng& rng, int layer = -1);

/// Fraction of ground-truth segments shorter than floor(w0/2); such segments
/// may disappear under pooling.
double short_segment_fraction(std::span<const int> labels, std::size_t w0);

}  // namespace c2f
