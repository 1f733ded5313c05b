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

struct ContrastConfig {
  std::size_t K = 20;        // partitions per video
  double epsilon = 0.0;      // companion offset in normalized time; 0 means 1/(3K)
  double delta = 0.03;       // temporal proximity for positives, normalized time
  double tau = 0.1;
  std::size_t num_clusters = 0;  // 0 means twice the number of classes
  bool use_video_level = true;
  ops::UpsampleMode upsample_mode = ops::UpsampleMode::linear;

  double effective_epsilon() const { return epsilon > 0.0 ? epsilon : 1.0 / (3.0 * static_cast<double>(K)); }
  std::size_t effective_clusters(std::size_t num_classes) const {
    return num_clusters > 0 ? num_clusters : 2 * num_classes;
  }
  void validate() const;
};

struct KMeansResult {
  std::vector<int> assignments;
  Tensor centroids;               // [k x F]
  std::vector<double> objective;  // sum of squared distances after each assignment pass
  std::size_t iterations = 0;
};

/// k-means++ seeding then Lloyd iterations until the assignment is a fixpoint
/// (at most `max_iter`). An emptied cluster is reseeded with the point farthest
/// from its current centroid.
KMeansResult kmeans(const Tensor& points, std::size_t k, Rng& rng, std::size_t max_iter = 100);

/// 2K samples of one video: one uniform draw per partition [i/K, (i+1)/K),
/// then a companion within epsilon of each (random sign, clipped to [0,1]).
struct SampledFrames {
  std::vector<double> times;         // normalized, 2K entries
  std::vector<std::size_t> indices;  // frame index of each time in a T-frame video
};

SampledFrames sample_frames(std::size_t frames, const ContrastConfig& cfg, Rng& rng);
std::size_t frame_at(double time, std::size_t frames);

/// One sampled frame with everything the set rule needs.
struct SampleMeta {
  std::size_t video = 0;
  double time = 0.0;
  int label = 0;     // cluster id, ground truth or pseudo-label
  int activity = 0;  // ignored unless activities are used
};

struct PosNegSets {
  std::vector<std::vector<std::size_t>> positives;
  std::vector<std::vector<std::size_t>> negatives;

  std::size_t positive_count() const;
};

/// Positives: same activity, same label and |dt| < delta. Negatives: other
/// activity, or same activity with another label. Same label beyond delta is
/// in neither set. With `use_activity` false every pair counts as same activity.
PosNegSets build_sets(std::span<const SampleMeta> samples, double delta, bool use_activity);

/// Video-level sets: positives share the activity, negatives do not.
PosNegSets build_video_sets(std::span<const int> activities);

/// f[t] = concat_u normalize(upsample(z_u, T)[t]); returns [sum d_u x T].
/// A zero layer block raises unless `allow_zero_blocks`; training sets it,
/// since ReLU can silence a whole block at a frame, and keeps such blocks zero.
Var multires_feature(Graph& g, std::span<const Var> z, std::size_t frames, ops::UpsampleMode mode,
                     bool allow_zero_blocks = false);

/// Same for a backbone pass: decoder features are first brought back to the
/// unpadded input length, then to `frames`.
Var multires_feature(Graph& g, const BackboneOutputs& out, std::size_t frames, ops::UpsampleMode mode,
                     bool allow_zero_blocks = false);

/// exp(cos(a,p)/tau) / (exp(cos(a,p)/tau) + sum_n exp(cos(a,n)/tau)) over the
/// columns of `features` [D x S].
double frame_contrast_prob(const Tensor& features, const PosNegSets& sets, std::size_t anchor, std::size_t positive,
                           double tau);

/// -(1 / #positive pairs) * sum over anchors i and j in P_i of log p_ij.
/// Throws std::invalid_argument when no positive pair exists.
Var set_contrastive_loss(Graph& g, Var features, const PosNegSets& sets, double tau);

/// One video of a contrastive batch: the input actually fed to the model and
/// per-frame labels at the original resolution.
struct ContrastItem {
  const Tensor* input = nullptr;  // [T_in x F], possibly pooled
  std::size_t frames = 0;         // original T
  std::span<const int> labels;    // size T
  int activity = 0;
};

struct ContrastTerms {
  Var frame;  // frame-level term
  Var video;  // invalid when skipped
  Var total;
  std::vector<BackboneOutputs> outputs;
};

/// Forwards every item, samples frames, builds sets and returns the summed
/// frame- and video-level losses.
ContrastTerms contrastive_batch_loss(Graph& g, Backbone& backbone, std::span<const ContrastItem> batch,
                                     const ContrastConfig& cfg, Rng& rng);

/// Same, reusing backbone passes already recorded on `g` (one per item).
ContrastTerms contrastive_batch_loss(Graph& g, std::vector<BackboneOutputs> outputs,
                                     std::span<const ContrastItem> batch, const ContrastConfig& cfg, Rng& rng);

/// Labels used for contrast: one vector per video of the batch, at the
/// original frame rate.
using BatchLabeler = std::function<std::vector<std::vector<int>>(const std::vector<const VideoSample*>& batch)>;

struct PretrainConfig {
  ContrastConfig contrast;
  AugmentConfig augment;
  AdamConfig adam{.lr = 1e-3, .weight_decay = 1e-3};
  std::size_t epochs = 100;
  std::size_t batch_size = 10;
  std::uint64_t seed = 0;
};

struct ContrastEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;
};

/// Contrastive training of the backbone with labels from `labeler`.
std::vector<ContrastEpoch> train_contrastive(Backbone& backbone, const std::vector<const VideoSample*>& videos,
                                             const BatchLabeler& labeler, const PretrainConfig& cfg,
                                             const std::function<void(const ContrastEpoch&)>& on_epoch = {});

/// Unsupervised representation learning with per-batch k-means cluster labels.
std::vector<ContrastEpoch> pretrain_unsupervised(Backbone& backbone, const std::vector<const VideoSample*>& videos,
                                                 std::size_t num_classes, const PretrainConfig& cfg,
                                                 const std::function<void(const ContrastEpoch&)>& on_epoch = {});

struct LinearEvalConfig {
  std::size_t epochs = 300;
  AdamConfig adam{.lr = 1e-2, .weight_decay = 0.0};
  AugmentConfig augment;  // inference window for the frozen model
  ops::UpsampleMode upsample_mode = ops::UpsampleMode::linear;
  std::uint64_t seed = 0;
};

/// Frozen multi-resolution features [D x T] of one video.
Tensor frozen_features(Backbone& backbone, const Tensor& frames, const LinearEvalConfig& cfg);

/// Affine + softmax classifier trained with cross-entropy on [D x T] feature
/// maps; features are standardized with training-set statistics.
class LinearClassifier {
 public:
  void fit(const std::vector<Tensor>& features, const std::vector<std::span<const int>>& labels,
           std::size_t num_classes, const LinearEvalConfig& cfg);
  Tensor probs(const Tensor& features) const;  // [C x T]

 private:
  Tensor standardize(const Tensor& features) const;
  Tensor mean_, inv_std_;
  Parameter weight_, bias_;
};

/// Linear evaluation of the frozen representation (or of the raw inputs when
/// `raw_inputs`), trained on `train` and scored on `test`.
SegReport linear_eval(Backbone& backbone, const std::vector<const VideoSample*>& train,
                      const std::vector<const VideoSample*>& test, std::size_t num_classes,
                      const LinearEvalConfig& cfg, bool raw_inputs = false);

}  // namespace c2f
