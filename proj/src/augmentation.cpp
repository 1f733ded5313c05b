#include "c2f/augmentation.hpp"

#include <algorithm>
#include <stdexcept>

#include "c2f/ensemble.hpp"
#include "c2f/metrics.hpp"

namespace c2f {

void AugmentConfig::validate() const {
  if (w0 < 2) throw std::invalid_argument("w0 must be at least 2");
  if (!(pi0 > 0.0 && pi0 <= 1.0)) throw std::invalid_argument("pi0 must lie in (0, 1]");
  if (tta_samples == 0) throw std::invalid_argument("tta_samples must be positive");
}

double AugmentConfig::probability(std::size_t w) const {
  if (w < min_window() || w > max_window()) return 0.0;
  if (w == w0) return pi0;
  return (1.0 - pi0) / static_cast<double>(max_window() - min_window());
}

namespace {

void check_window(std::size_t w, std::size_t T) {
  if (w == 0) throw std::invalid_argument("pooling window must be positive");
  if (w > T) {
    throw std::invalid_argument("pooling window " + std::to_string(w) + " exceeds sequence length " +
                                std::to_string(T));
  }
}

}  // namespace

Tensor pool_features(const Tensor& frames, std::size_t w) {
  if (frames.ndim() != 2) throw ShapeError("pool_features expects [T x F], got " + frames.shape_string());
  const std::size_t T = frames.dim(0), F = frames.dim(1);
  check_window(w, T);
  const std::size_t out_len = (T + w - 1) / w;
  Tensor out({out_len, F});
  for (std::size_t t = 0; t < out_len; ++t) {
    auto dst = out.row(t);
    auto first = frames.row(t * w);
    std::copy(first.begin(), first.end(), dst.begin());
    for (std::size_t s = t * w + 1; s < std::min(T, (t + 1) * w); ++s) {
      auto src = frames.row(s);
      for (std::size_t f = 0; f < F; ++f) dst[f] = std::max(dst[f], src[f]);
    }
  }
  return out;
}

std::vector<int> pool_labels(std::span<const int> labels, std::size_t w) {
  const std::size_t T = labels.size();
  check_window(w, T);
  std::vector<int> out;
  out.reserve((T + w - 1) / w);
  std::vector<std::pair<int, std::size_t>> counts;
  for (std::size_t start = 0; start < T; start += w) {
    counts.clear();
    for (std::size_t s = start; s < std::min(T, start + w); ++s) {
      auto it = std::find_if(counts.begin(), counts.end(), [&](const auto& c) { return c.first == labels[s]; });
      if (it == counts.end()) {
        counts.emplace_back(labels[s], 1);
      } else {
        ++it->second;
      }
    }
    auto best = counts.front();
    for (const auto& c : counts) {
      if (c.second > best.second || (c.second == best.second && c.first < best.first)) best = c;
    }
    out.push_back(best.first);
  }
  return out;
}

std::size_t sample_window(const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  if (uniform01(rng) < cfg.pi0) return cfg.w0;
  // Uniform over the support without w0.
  const auto lo = static_cast<long>(cfg.min_window());
  const auto hi = static_cast<long>(cfg.max_window()) - 1;
  const long w = uniform_int(rng, lo, hi);
  return static_cast<std::size_t>(w >= static_cast<long>(cfg.w0) ? w + 1 : w);
}

Tensor segment_probs(Backbone& backbone, SegmentationHeads& heads, const Tensor& frames, std::size_t w,
                     int layer) {
  const std::size_t T = frames.dim(0);
  w = std::min(w, T);
  Graph g;
  const auto features = backbone.forward(g, w > 1 ? pool_features(frames, w) : frames, ops::NormMode::eval);
  const auto probs = heads.apply(g, features);
  if (layer >= static_cast<int>(probs.size())) throw std::invalid_argument("decoder layer out of range");
  Var ens = layer >= 0 ? probs[static_cast<std::size_t>(layer)] : c2f_ensemble(g, probs, heads.ensemble_weights(g));
  if (g.value(ens).dim(1) != T) ens = ops::upsample1d(g, ens, T, ops::UpsampleMode::linear);
  return g.value(ens);
}

Tensor segment_probs(Model& model, const Tensor& frames, std::size_t w) {
  return segment_probs(model.backbone(), model.heads(), frames, w);
}

Tensor tta_predict(Backbone& backbone, SegmentationHeads& heads, const Tensor& frames, const AugmentConfig& cfg,
                   Rng& rng, int layer) {
  cfg.validate();
  Tensor mean;
  for (std::size_t i = 0; i < cfg.tta_samples; ++i) {
    Tensor p = segment_probs(backbone, heads, frames, sample_window(cfg, rng), layer);
    if (mean.empty()) {
      mean = std::move(p);
    } else {
      for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += p[j];
    }
  }
  for (std::size_t j = 0; j < mean.size(); ++j) mean[j] /= static_cast<double>(cfg.tta_samples);
  return mean;
}

Tensor tta_predict(Model& model, const Tensor& frames, const AugmentConfig& cfg, Rng& rng) {
  return tta_predict(model.backbone(), model.heads(), frames, cfg, rng);
}

Tensor infer_probs(Backbone& backbone, SegmentationHeads& heads, const Tensor& frames, const AugmentConfig& cfg,
                   bool tta, Rng& rng, int layer) {
  if (tta) return tta_predict(backbone, heads, frames, cfg, rng, layer);
  return segment_probs(backbone, heads, frames, cfg.w0, layer);
}

double short_segment_fraction(std::span<const int> labels, std::size_t w0) {
  const auto segs = segments_from_labels(labels);
  if (segs.empty()) return 0.0;
  const auto shorter = std::count_if(segs.begin(), segs.end(), [&](const Segment& s) { return s.length() < w0 / 2; });
  return static_cast<double>(shorter) / static_cast<double>(segs.size());
}

}  // namespace c2f
