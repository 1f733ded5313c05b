#include "c2f/model.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace c2f {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("invalid model config: " + msg); };
  if (depth < 1) fail("depth must be >= 1");
  if (kernel % 2 == 0) fail("kernel must be odd");
  if (input_dim == 0) fail("input_dim must be > 0");
  if (num_classes < 1) fail("num_classes must be >= 1");
  if (num_activities == 1) fail("num_activities must be 0 (disabled) or >= 2");
  if (encoder_channels.size() != depth + 1) fail("encoder_channels needs depth + 1 entries");
  if (decoder_channels.size() != depth) fail("decoder_channels needs depth entries");
  for (auto c : encoder_channels) {
    if (c == 0) fail("zero encoder width");
  }
  for (auto c : decoder_channels) {
    if (c == 0) fail("zero decoder width");
  }
  for (auto w : tpp_windows) {
    if (w < 2) fail("tpp windows must be >= 2");
  }
}

ModelConfig ModelConfig::uniform(std::size_t input_dim, std::size_t num_classes, std::size_t depth,
                                 std::size_t width) {
  ModelConfig cfg;
  cfg.input_dim = input_dim;
  cfg.num_classes = num_classes;
  cfg.depth = depth;
  cfg.encoder_channels.assign(depth + 1, width);
  cfg.decoder_channels.assign(depth, width);
  return cfg;
}

std::size_t ModelConfig::feature_dim() const {
  return std::accumulate(decoder_channels.begin(), decoder_channels.end(), std::size_t{0});
}

ConvLayer::ConvLayer(const std::string& name, std::size_t in, std::size_t out, std::size_t k, Rng& rng) {
  // He-uniform: U(-b, b) with b = sqrt(6 / fan_in).
  const double bound = std::sqrt(6.0 / static_cast<double>(in * k));
  Tensor w({out, in, k});
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : w.data()) v = dist(rng);
  weight = Parameter(name + ".weight", std::move(w));
  bias = Parameter(name + ".bias", Tensor({out}));
}

Var ConvLayer::apply(Graph& g, Var x) {
  const std::size_t k = weight.value.dim(2);
  return ops::conv1d(g, x, g.parameter(weight), g.parameter(bias), (k - 1) / 2);
}

NormLayer::NormLayer(const std::string& name, std::size_t channels)
    : gamma(name + ".gamma", Tensor({channels}, 1.0)), beta(name + ".beta", Tensor({channels})), stats(channels) {}

Var NormLayer::apply(Graph& g, Var x, ops::NormMode mode) {
  return ops::batchnorm1d(g, x, g.parameter(gamma), g.parameter(beta), stats, mode);
}

DoubleConv::DoubleConv(const std::string& name, std::size_t in, std::size_t out, std::size_t k, Rng& rng)
    : conv1(name + ".conv1", in, out, k, rng),
      norm1(name + ".norm1", out),
      conv2(name + ".conv2", out, out, k, rng),
      norm2(name + ".norm2", out) {}

Var DoubleConv::apply(Graph& g, Var x, ops::NormMode mode) {
  Var h = ops::relu(g, norm1.apply(g, conv1.apply(g, x), mode));
  return ops::relu(g, norm2.apply(g, conv2.apply(g, h), mode));
}

namespace {

void append_conv(std::vector<Parameter*>& out, ConvLayer& c) {
  out.push_back(&c.weight);
  out.push_back(&c.bias);
}

void append_double(std::vector<Parameter*>& out, DoubleConv& d) {
  append_conv(out, d.conv1);
  out.push_back(&d.norm1.gamma);
  out.push_back(&d.norm1.beta);
  append_conv(out, d.conv2);
  out.push_back(&d.norm2.gamma);
  out.push_back(&d.norm2.beta);
}

void append_norm_state(std::vector<std::pair<std::string, Tensor*>>& out, NormLayer& n) {
  out.emplace_back(n.gamma.name, &n.gamma.value);
  out.emplace_back(n.beta.name, &n.beta.value);
  const std::string base = n.gamma.name.substr(0, n.gamma.name.size() - std::string(".gamma").size());
  out.emplace_back(base + ".running_mean", &n.stats.running_mean);
  out.emplace_back(base + ".running_var", &n.stats.running_var);
}

void append_conv_state(std::vector<std::pair<std::string, Tensor*>>& out, ConvLayer& c) {
  out.emplace_back(c.weight.name, &c.weight.value);
  out.emplace_back(c.bias.name, &c.bias.value);
}

void append_double_state(std::vector<std::pair<std::string, Tensor*>>& out, DoubleConv& d) {
  append_conv_state(out, d.conv1);
  append_norm_state(out, d.norm1);
  append_conv_state(out, d.conv2);
  append_norm_state(out, d.norm2);
}

}  // namespace

Backbone::Backbone(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const auto& enc = cfg_.encoder_channels;
  const auto& dec = cfg_.decoder_channels;
  encoder_.reserve(cfg_.depth + 1);
  encoder_.emplace_back("enc0", cfg_.input_dim, enc[0], cfg_.kernel, rng);
  for (std::size_t u = 1; u <= cfg_.depth; ++u) {
    encoder_.emplace_back("enc" + std::to_string(u), enc[u - 1], enc[u], cfg_.kernel, rng);
  }
  const std::size_t bottleneck_width = enc[cfg_.depth] + cfg_.tpp_windows.size();
  tpp_ = ConvLayer("tpp", enc[cfg_.depth], 1, 1, rng);
  bottleneck_ = ConvLayer("bottleneck", bottleneck_width, bottleneck_width, 3, rng);
  decoder_.reserve(cfg_.depth);
  std::size_t prev = bottleneck_width;
  for (std::size_t u = 1; u <= cfg_.depth; ++u) {
    const std::size_t skip = cfg_.skip_connections ? enc[cfg_.depth - u] : 0;
    decoder_.emplace_back("dec" + std::to_string(u), prev + skip, dec[u - 1], cfg_.kernel, rng);
    prev = dec[u - 1];
  }
}

Var tpp_bottleneck(Graph& g, Var f_en, const std::vector<std::size_t>& windows, ConvLayer& collapse,
                   ops::UpsampleMode mode) {
  const std::size_t len = g.value(f_en).dim(1);
  std::vector<Var> parts{f_en};
  for (std::size_t w : windows) {
    Var pooled = ops::maxpool1d(g, f_en, w, ops::PoolRounding::floor_min1);
    Var collapsed = collapse.apply(g, pooled);
    parts.push_back(ops::upsample1d(g, collapsed, len, mode));
  }
  if (parts.size() == 1) return f_en;
  return ops::concat_channels(g, parts);
}

BackboneOutputs Backbone::forward(Graph& g, const Tensor& frames, ops::NormMode mode) {
  if (frames.ndim() != 2 || frames.dim(1) != cfg_.input_dim) {
    throw ShapeError("backbone expects [T x " + std::to_string(cfg_.input_dim) + "] features, got " +
                     frames.shape_string());
  }
  if (frames.dim(0) == 0) throw ShapeError("backbone input has zero frames");
  if (mode == ops::NormMode::eval && cfg_.per_sample_inference) mode = ops::NormMode::sample;
  BackboneOutputs out;
  out.frames = frames.dim(0);
  out.padded_frames = std::max(out.frames, cfg_.min_frames());

  Var x = g.constant(frames.transposed());
  x = ops::pad_replicate(g, x, out.padded_frames);

  std::vector<Var> enc;
  enc.push_back(encoder_[0].apply(g, x, mode));
  for (std::size_t u = 1; u <= cfg_.depth; ++u) {
    enc.push_back(encoder_[u].apply(g, ops::maxpool1d(g, enc.back(), 2), mode));
  }
  out.f_en = enc.back();

  Var h = tpp_bottleneck(g, out.f_en, cfg_.tpp_windows, tpp_, cfg_.upsample_mode);
  h = bottleneck_.apply(g, h);

  for (std::size_t u = 1; u <= cfg_.depth; ++u) {
    Var skip = enc[cfg_.depth - u];
    h = ops::upsample1d(g, h, g.value(skip).dim(1), cfg_.upsample_mode);
    if (cfg_.skip_connections) {
      const Var parts[] = {h, skip};
      h = ops::concat_channels(g, parts);
    }
    h = decoder_[u - 1].apply(g, h, mode);
    out.z.push_back(h);
  }
  return out;
}

std::vector<Parameter*> Backbone::parameters() {
  std::vector<Parameter*> out;
  for (auto& d : encoder_) append_double(out, d);
  append_conv(out, tpp_);
  append_conv(out, bottleneck_);
  for (auto& d : decoder_) append_double(out, d);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> Backbone::state() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& d : encoder_) append_double_state(out, d);
  append_conv_state(out, tpp_);
  append_conv_state(out, bottleneck_);
  for (auto& d : decoder_) append_double_state(out, d);
  return out;
}

SegmentationHeads::SegmentationHeads(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  for (std::size_t u = 1; u <= cfg_.depth; ++u) {
    heads_.emplace_back("head" + std::to_string(u), cfg_.decoder_channels[u - 1], cfg_.num_classes, 1, rng);
  }
  if (cfg_.learned_alpha) alpha_logits_ = Parameter("alpha_logits", Tensor({cfg_.depth, 1}));
}

std::vector<Var> SegmentationHeads::apply(Graph& g, const BackboneOutputs& features) {
  if (features.z.size() != heads_.size()) throw ShapeError("head count does not match decoder depth");
  std::vector<Var> probs;
  for (std::size_t u = 0; u < heads_.size(); ++u) {
    Var p = ops::softmax(g, heads_[u].apply(g, features.z[u]));
    p = ops::upsample1d(g, p, features.padded_frames, cfg_.upsample_mode);
    probs.push_back(ops::crop_columns(g, p, features.frames));
  }
  return probs;
}

Var SegmentationHeads::ensemble_weights(Graph& g) {
  if (alpha_logits_) return ops::softmax(g, g.parameter(*alpha_logits_));
  return g.constant(Tensor({cfg_.depth, 1}, 1.0 / static_cast<double>(cfg_.depth)));
}

std::vector<Parameter*> SegmentationHeads::parameters() {
  std::vector<Parameter*> out;
  for (auto& h : heads_) append_conv(out, h);
  if (alpha_logits_) out.push_back(&*alpha_logits_);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> SegmentationHeads::state() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& h : heads_) append_conv_state(out, h);
  if (alpha_logits_) out.emplace_back(alpha_logits_->name, &alpha_logits_->value);
  return out;
}

ActivityHead::ActivityHead(const ModelConfig& cfg, Rng& rng)
    : fc1_("activity.fc1", cfg.encoder_channels.back(), cfg.activity_hidden, 1, rng),
      fc2_("activity.fc2", cfg.activity_hidden, cfg.num_activities, 1, rng) {}

Var ActivityHead::apply(Graph& g, Var f_en) {
  Var pooled = ops::max_over_time(g, f_en);
  Var hidden = ops::relu(g, fc1_.apply(g, pooled));
  return ops::softmax(g, fc2_.apply(g, hidden));
}

std::vector<Parameter*> ActivityHead::parameters() {
  std::vector<Parameter*> out;
  append_conv(out, fc1_);
  append_conv(out, fc2_);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> ActivityHead::state() {
  std::vector<std::pair<std::string, Tensor*>> out;
  append_conv_state(out, fc1_);
  append_conv_state(out, fc2_);
  return out;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng = make_stream(seed, "model");
  backbone_ = Backbone(cfg_, rng);
  heads_ = SegmentationHeads(cfg_, rng);
  if (cfg_.num_activities >= 2) activity_.emplace(cfg_, rng);
}

DecoderOutputs Model::forward(Graph& g, const Tensor& frames, ops::NormMode mode) {
  DecoderOutputs out;
  out.features = backbone_.forward(g, frames, mode);
  out.probs = heads_.apply(g, out.features);
  return out;
}

void Model::reset_heads(std::uint64_t seed) {
  Rng rng = make_stream(seed, "heads");
  heads_ = SegmentationHeads(cfg_, rng);
}

ActivityHead& Model::activity_head() {
  if (!activity_) throw std::logic_error("activity head is disabled (num_activities < 2)");
  return *activity_;
}

Var Model::activity_probs(Graph& g, const BackboneOutputs& features) {
  return activity_head().apply(g, features.f_en);
}

std::vector<Parameter*> Model::parameters() {
  auto out = backbone_.parameters();
  for (auto* p : heads_.parameters()) out.push_back(p);
  if (activity_) {
    for (auto* p : activity_->parameters()) out.push_back(p);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor*>> Model::state() {
  auto out = backbone_.state();
  for (auto& s : heads_.state()) out.push_back(s);
  if (activity_) {
    for (auto& s : activity_->state()) out.push_back(s);
  }
  return out;
}

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += p->value.size();
  return n;
}

}  // namespace c2f
