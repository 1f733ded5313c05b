#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "c2f/graph.hpp"
#include "c2f/ops.hpp"
#include "c2f/rng.hpp"

namespace c2f {

/// Network topology. Defaults reproduce the full-size encoder-decoder.
struct ModelConfig {
  std::size_t input_dim = 2048;
  std::size_t num_classes = 48;
  std::size_t num_activities = 0;  // 0 disables the complex-activity head
  std::size_t kernel = 5;
  std::size_t depth = 6;
  /// Output widths of encoder stages 0..depth (depth + 1 entries).
  std::vector<std::size_t> encoder_channels{256, 256, 256, 128, 128, 128, 128};
  /// Output widths of decoder stages 1..depth.
  std::vector<std::size_t> decoder_channels{128, 128, 128, 128, 128, 128};
  std::vector<std::size_t> tpp_windows{2, 3, 5, 6};
  ops::UpsampleMode upsample_mode = ops::UpsampleMode::linear;
  bool skip_connections = true;
  bool learned_alpha = false;
  std::size_t activity_hidden = 128;
  /// Normalization at inference: per-sample statistics (matching how each
  /// video is normalized during training) or the running averages.
  bool per_sample_inference = true;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  /// Same widths everywhere; convenient for small synthetic models.
  static ModelConfig uniform(std::size_t input_dim, std::size_t num_classes, std::size_t depth,
                             std::size_t width);

  std::size_t min_frames() const { return std::size_t{1} << depth; }
  std::size_t feature_dim() const;  // width of the multi-resolution feature
};

struct ConvLayer {
  Parameter weight;  // [out x in x k]
  Parameter bias;    // [out]

  ConvLayer() = default;
  ConvLayer(const std::string& name, std::size_t in, std::size_t out, std::size_t k, Rng& rng);
  Var apply(Graph& g, Var x);
};

struct NormLayer {
  Parameter gamma;
  Parameter beta;
  ops::NormStats stats;

  NormLayer() = default;
  NormLayer(const std::string& name, std::size_t channels);
  Var apply(Graph& g, Var x, ops::NormMode mode);
};

/// conv -> norm -> relu -> conv -> norm -> relu
struct DoubleConv {
  ConvLayer conv1;
  NormLayer norm1;
  ConvLayer conv2;
  NormLayer norm2;

  DoubleConv() = default;
  DoubleConv(const std::string& name, std::size_t in, std::size_t out, std::size_t k, Rng& rng);
  Var apply(Graph& g, Var x, ops::NormMode mode);
};

/// Graph handles produced by one backbone pass.
struct BackboneOutputs {
  std::vector<Var> z;  // decoder features, coarse to fine; z[u-1] is [d_u x ceil(T/2^(depth-u))]
  Var f_en;            // final encoder feature
  std::size_t frames = 0;         // caller's input length
  std::size_t padded_frames = 0;  // length actually run (>= 2^depth)
};

/// Backbone outputs plus per-decoder class probabilities upsampled to the input length.
struct DecoderOutputs {
  BackboneOutputs features;
  std::vector<Var> probs;  // [C x frames] each, coarse to fine
  std::vector<Var>& z() { return features.z; }
};

/// Encoder, pyramid-pooling bottleneck and decoder (the representation model).
class Backbone {
 public:
  Backbone() = default;
  Backbone(const ModelConfig& cfg, Rng& rng);

  /// `frames` is a [T x F] feature matrix. Eval mode maps to per-sample
  /// statistics when the config asks for it.
  BackboneOutputs forward(Graph& g, const Tensor& frames, ops::NormMode mode);

  std::vector<Parameter*> parameters();
  std::vector<std::pair<std::string, Tensor*>> state();
  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  std::vector<DoubleConv> encoder_;
  ConvLayer tpp_;
  ConvLayer bottleneck_;
  std::vector<DoubleConv> decoder_;
};

/// Temporal pyramid pooling: for each window, floor-pool (at least one
/// output), collapse channels with the shared 1x1 conv, upsample back and
/// append as one extra channel.
Var tpp_bottleneck(Graph& g, Var f_en, const std::vector<std::size_t>& windows, ConvLayer& collapse,
                   ops::UpsampleMode mode);

/// One 1x1 projection per decoder layer to class logits.
class SegmentationHeads {
 public:
  SegmentationHeads() = default;
  SegmentationHeads(const ModelConfig& cfg, Rng& rng);

  /// Softmax probabilities per decoder layer, upsampled to the input length.
  std::vector<Var> apply(Graph& g, const BackboneOutputs& features);

  /// Ensemble weights as a graph value ([depth x 1]); uniform unless learned.
  Var ensemble_weights(Graph& g);

  std::vector<Parameter*> parameters();
  std::vector<std::pair<std::string, Tensor*>> state();

 private:
  ModelConfig cfg_;
  std::vector<ConvLayer> heads_;
  std::optional<Parameter> alpha_logits_;
};

/// Two-layer MLP on the temporally max-pooled final encoder feature.
class ActivityHead {
 public:
  ActivityHead() = default;
  ActivityHead(const ModelConfig& cfg, Rng& rng);

  /// [C_V x 1] probabilities.
  Var apply(Graph& g, Var f_en);

  std::vector<Parameter*> parameters();
  std::vector<std::pair<std::string, Tensor*>> state();

 private:
  ConvLayer fc1_;
  ConvLayer fc2_;
};

/// Backbone with its own segmentation heads and optional activity head.
class Model {
 public:
  Model() = default;
  Model(const ModelConfig& cfg, std::uint64_t seed);

  DecoderOutputs forward(Graph& g, const Tensor& frames, ops::NormMode mode);
  Var activity_probs(Graph& g, const BackboneOutputs& features);

  Backbone& backbone() { return backbone_; }
  SegmentationHeads& heads() { return heads_; }
  /// Fresh segmentation heads drawn from the "heads" stream of `seed`.
  void reset_heads(std::uint64_t seed);
  bool has_activity_head() const { return activity_.has_value(); }
  ActivityHead& activity_head();
  const ModelConfig& config() const { return cfg_; }

  std::vector<Parameter*> parameters();
  std::vector<std::pair<std::string, Tensor*>> state();
  std::size_t parameter_count();

 private:
  ModelConfig cfg_;
  Backbone backbone_;
  SegmentationHeads heads_;
  std::optional<ActivityHead> activity_;
};

}  // namespace c2f
