#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "c2f/augmentation.hpp"
#include "c2f/dataset.hpp"
#include "c2f/metrics.hpp"
#include "c2f/model.hpp"
#include "c2f/optim.hpp"

namespace c2f {

struct LossConfig {
  double lambda_tr = 0.15;
  double eps_max = 4.0;

  void validate() const;
};

struct JointLoss {
  Var ce;
  Var tr;     // invalid for single-frame inputs
  Var total;  // ce + lambda_tr * tr
};

/// Frame cross-entropy plus the weighted transition (smoothing) loss on p^ens.
JointLoss joint_loss(Graph& g, Var p_ens, std::span<const int> labels, const LossConfig& cfg);

/// -log p_V[y_V] for a [C_V x 1] probability vector.
Var activity_loss(Graph& g, Var p_activity, int activity);

struct TrainConfig {
  AdamConfig adam{.lr = 1e-3, .weight_decay = 1e-3};
  std::size_t epochs = 200;
  std::size_t batch_size = 8;  // videos whose gradients are accumulated per step
  AugmentConfig augment;
  LossConfig loss;
  /// Ablation: average the joint loss over every decoder output instead of
  /// applying it once to the ensemble.
  bool loss_per_layer = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double ce = 0.0;
  double tr = 0.0;
  double total = 0.0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Trains segmentation on fully labeled videos. Deterministic given cfg.seed.
std::vector<EpochStats> train_supervised(Model& model, const std::vector<const VideoSample*>& videos,
                                         const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Trains the backbone and activity head with the video-level loss only.
std::vector<EpochStats> train_activity(Model& model, const std::vector<const VideoSample*>& videos,
                                       const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Fraction of videos whose predicted activity is correct, in percent.
double activity_accuracy(Model& model, const std::vector<const VideoSample*>& videos, const AugmentConfig& augment);

struct EvalOptions {
  AugmentConfig augment;
  bool tta = false;
  std::uint64_t seed = 0;
  bool per_video_f1 = false;
  /// -1 scores the ensemble; u >= 0 scores decoder output u alone.
  int layer = -1;
};

/// Segmentation metrics on `videos`; optionally returns each video's [C x T] probabilities.
SegReport evaluate(Backbone& backbone, SegmentationHeads& heads, const std::vector<const VideoSample*>& videos,
                   const EvalOptions& opts, std::vector<Tensor>* probs_out = nullptr);
SegReport evaluate(Model& model, const std::vector<const VideoSample*>& videos, const EvalOptions& opts,
                   std::vector<Tensor>* probs_out = nullptr);

}  // namespace c2f
