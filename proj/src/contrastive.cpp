#include "c2f/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "c2f/ensemble.hpp"

namespace c2f {

void ContrastConfig::validate() const {
  if (K == 0) throw std::invalid_argument("K must be positive");
  const double eps = effective_epsilon();
  if (!(eps > 0.0 && eps < 1.0 / static_cast<double>(K))) throw std::invalid_argument("epsilon must lie in (0, 1/K)");
  if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("delta must lie in (0, 1]");
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  if (num_clusters == 1) throw std::invalid_argument("need at least 2 clusters");
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

KMeansResult kmeans(const Tensor& points, std::size_t k, Rng& rng, std::size_t max_iter) {
  if (points.ndim() != 2) throw ShapeError("kmeans expects [N x F], got " + points.shape_string());
  const std::size_t N = points.dim(0), F = points.dim(1);
  if (k == 0) throw std::invalid_argument("kmeans needs k >= 1");
  if (N < k) throw std::invalid_argument("kmeans with " + std::to_string(N) + " points cannot form " + std::to_string(k) + " clusters");

  KMeansResult r;
  r.centroids = Tensor({k, F});
  // k-means++ seeding.
  std::vector<double> d2(N, std::numeric_limits<double>::infinity());
  std::size_t chosen = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(N) - 1));
  for (std::size_t c = 0; c < k; ++c) {
    std::copy(points.row(chosen).begin(), points.row(chosen).end(), r.centroids.row(c).begin());
    if (c + 1 == k) break;
    double total = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points.row(i), r.centroids.row(c)));
      total += d2[i];
    }
    if (total > 0.0) {
      double target = uniform01(rng) * total;
      chosen = N - 1;
      for (std::size_t i = 0; i < N; ++i) {
        target -= d2[i];
        if (target < 0.0 && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(N) - 1));
    }
  }

  r.assignments.assign(N, -1);
  std::vector<double> dist(N);
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    double objective = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      int best = 0;
      double best_d = squared_distance(points.row(i), r.centroids.row(0));
      for (std::size_t c = 1; c < k; ++c) {
        const double d = squared_distance(points.row(i), r.centroids.row(c));
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      changed |= r.assignments[i] != best;
      r.assignments[i] = best;
      dist[i] = best_d;
      objective += best_d;
    }
    r.objective.push_back(objective);
    r.iterations = iter + 1;
    if (!changed) break;

    r.centroids.fill(0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < N; ++i) {
      const auto c = static_cast<std::size_t>(r.assignments[i]);
      ++counts[c];
      auto row = r.centroids.row(c);
      auto p = points.row(i);
      for (std::size_t f = 0; f < F; ++f) row[f] += p[f];
    }
    std::vector<bool> taken(N, false);
    for (std::size_t c = 0; c < k; ++c) {
      auto row = r.centroids.row(c);
      if (counts[c] > 0) {
        for (auto& v : row) v /= static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: move it onto the worst-fitted point.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < N; ++i) {
        if (!taken[i] && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      }
      taken[far] = true;
      dist[far] = 0.0;
      std::copy(points.row(far).begin(), points.row(far).end(), row.begin());
    }
  }
  return r;
}

std::size_t frame_at(double time, std::size_t frames) {
  const auto idx = static_cast<std::size_t>(std::floor(time * static_cast<double>(frames)));
  return std::min(idx, frames - 1);
}

SampledFrames sample_frames(std::size_t frames, const ContrastConfig& cfg, Rng& rng) {
  cfg.validate();
  if (frames < cfg.K) {
    throw std::invalid_argument("video with " + std::to_string(frames) + " frames is shorter than K=" + std::to_string(cfg.K));
  }
  const double K = static_cast<double>(cfg.K);
  const double eps = cfg.effective_epsilon();
  SampledFrames s;
  s.times.resize(2 * cfg.K);
  for (std::size_t i = 0; i < cfg.K; ++i) {
    const double t = (static_cast<double>(i) + uniform01(rng)) / K;
    s.times[i] = std::min(t, std::nextafter((static_cast<double>(i) + 1.0) / K, 0.0));
  }
  for (std::size_t i = 0; i < cfg.K; ++i) {
    const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
    const double offset = eps * (1.0 - uniform01(rng));  // (0, eps]
    s.times[cfg.K + i] = std::clamp(s.times[i] + sign * offset, 0.0, 1.0);
  }
  for (double t : s.times) s.indices.push_back(frame_at(t, frames));
  return s;
}

std::size_t PosNegSets::positive_count() const {
  std::size_t n = 0;
  for (const auto& p : positives) n += p.size();
  return n;
}

PosNegSets build_sets(std::span<const SampleMeta> samples, double delta, bool use_activity) {
  const std::size_t S = samples.size();
  PosNegSets sets;
  sets.positives.resize(S);
  sets.negatives.resize(S);
  for (std::size_t a = 0; a < S; ++a) {
    for (std::size_t b = 0; b < S; ++b) {
      if (a == b) continue;
      const auto& x = samples[a];
      const auto& y = samples[b];
      if (use_activity && x.activity != y.activity) {
        sets.negatives[a].push_back(b);
      } else if (x.label != y.label) {
        sets.negatives[a].push_back(b);
      } else if (std::abs(x.time - y.time) < delta) {
        sets.positives[a].push_back(b);
      }
    }
  }
  return sets;
}

PosNegSets build_video_sets(std::span<const int> activities) {
  PosNegSets sets;
  sets.positives.resize(activities.size());
  sets.negatives.resize(activities.size());
  for (std::size_t a = 0; a < activities.size(); ++a) {
    for (std::size_t b = 0; b < activities.size(); ++b) {
      if (a == b) continue;
      (activities[a] == activities[b] ? sets.positives : sets.negatives)[a].push_back(b);
    }
  }
  return sets;
}

Var multires_feature(Graph& g, std::span<const Var> z, std::size_t frames, ops::UpsampleMode mode,
                     bool allow_zero_blocks) {
  if (z.empty()) throw ShapeError("multires_feature needs at least one decoder output");
  std::vector<Var> blocks;
  for (Var zu : z) {
    Var up = g.value(zu).dim(1) == frames ? zu : ops::upsample1d(g, zu, frames, mode);
    blocks.push_back(ops::l2_normalize_columns(g, up, allow_zero_blocks));
  }
  return blocks.size() == 1 ? blocks[0] : ops::concat_channels(g, blocks);
}

Var multires_feature(Graph& g, const BackboneOutputs& out, std::size_t frames, ops::UpsampleMode mode,
                     bool allow_zero_blocks) {
  if (out.frames == out.padded_frames) return multires_feature(g, out.z, frames, mode, allow_zero_blocks);
  std::vector<Var> z;
  for (Var zu : out.z) {
    Var up = ops::upsample1d(g, zu, out.padded_frames, mode);
    z.push_back(ops::crop_columns(g, up, out.frames));
  }
  return multires_feature(g, z, frames, mode, allow_zero_blocks);
}

double frame_contrast_prob(const Tensor& features, const PosNegSets& sets, std::size_t anchor, std::size_t positive,
                           double tau) {
  const Tensor ft = features.transposed();
  auto e = [&](std::size_t b) { return std::exp(cosine_similarity(ft.row(anchor), ft.row(b)) / tau); };
  const double num = e(positive);
  double den = num;
  for (std::size_t n : sets.negatives.at(anchor)) den += e(n);
  return num / den;
}

Var set_contrastive_loss(Graph& g, Var features, const PosNegSets& sets, double tau) {
  const Tensor& xv = g.value(features);
  if (xv.ndim() != 2) throw ShapeError("contrastive features must be [D x S]");
  const std::size_t D = xv.dim(0), S = xv.dim(1);
  if (sets.positives.size() != S || sets.negatives.size() != S) throw ShapeError("sets do not match the sample count");
  const std::size_t npos = sets.positive_count();
  if (npos == 0) throw std::invalid_argument("contrastive loss is undefined without positive pairs");

  // Unit columns stored row-major per sample.
  const Tensor xt = xv.transposed();
  Tensor unit({S, D});
  std::vector<double> norm(S);
  for (std::size_t a = 0; a < S; ++a) {
    double n2 = 0.0;
    for (double v : xt.row(a)) n2 += v * v;
    norm[a] = std::sqrt(n2);
    if (!std::isfinite(norm[a])) throw NumericError("contrastive feature column " + std::to_string(a) + " is not finite");
    if (norm[a] == 0.0) continue;  // direction undefined: cosine 0, no gradient
    for (std::size_t d = 0; d < D; ++d) unit(a, d) = xt(a, d) / norm[a];
  }
  Tensor cos({S, S});
  for (std::size_t a = 0; a < S; ++a) {
    if (sets.positives[a].empty()) continue;
    auto ua = unit.row(a);
    auto fill = [&](std::size_t b) {
      auto ub = unit.row(b);
      double dot = 0.0;
      for (std::size_t d = 0; d < D; ++d) dot += ua[d] * ub[d];
      cos(a, b) = std::clamp(dot, -1.0, 1.0);
    };
    for (auto b : sets.positives[a]) fill(b);
    for (auto b : sets.negatives[a]) fill(b);
  }

  // e = exp((cos - 1) / tau): shifted by the maximum so it never overflows.
  auto ex = [&](std::size_t a, std::size_t b) { return std::exp((cos(a, b) - 1.0) / tau); };
  Tensor coef({S, S});  // dL/dcos
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(npos);
  for (std::size_t a = 0; a < S; ++a) {
    if (sets.positives[a].empty()) continue;
    double neg = 0.0;
    for (auto k : sets.negatives[a]) neg += ex(a, k);
    for (auto j : sets.positives[a]) {
      const double e = ex(a, j);
      const double z = e + neg;
      loss += std::log(z) - std::log(e);
      coef(a, j) += -(1.0 - e / z) / tau * inv;
      for (auto k : sets.negatives[a]) coef(a, k) += ex(a, k) / (tau * z) * inv;
    }
  }
  loss *= inv;

  return g.record(Tensor({1}, loss), {features},
      [features, coef = std::move(coef), cos = std::move(cos), unit = std::move(unit), norm = std::move(norm), S, D](
          Graph& gr, const Tensor& /*out*/, const Tensor& gout) {
        Tensor* gx = gr.grad_buffer(features);
        const double up = gout[0];
        std::vector<double> acc(D);
        for (std::size_t a = 0; a < S; ++a) {
          std::fill(acc.begin(), acc.end(), 0.0);
          double self = 0.0;
          for (std::size_t b = 0; b < S; ++b) {
            const double m = coef(a, b) + coef(b, a);
            if (m == 0.0) continue;
            auto ub = unit.row(b);
            for (std::size_t d = 0; d < D; ++d) acc[d] += m * ub[d];
            self += m * cos(a, b);
          }
          if (norm[a] == 0.0) continue;
          if (self == 0.0 && std::all_of(acc.begin(), acc.end(), [](double v) { return v == 0.0; })) continue;
          auto ua = unit.row(a);
          for (std::size_t d = 0; d < D; ++d) (*gx)(d, a) += up * (acc[d] - self * ua[d]) / norm[a];
        }
      },
      "set_contrastive_loss");
}

ContrastTerms contrastive_batch_loss(Graph& g, Backbone& backbone, std::span<const ContrastItem> batch,
                                     const ContrastConfig& cfg, Rng& rng) {
  std::vector<BackboneOutputs> outputs;
  for (const auto& item : batch) outputs.push_back(backbone.forward(g, *item.input, ops::NormMode::train));
  return contrastive_batch_loss(g, std::move(outputs), batch, cfg, rng);
}

ContrastTerms contrastive_batch_loss(Graph& g, std::vector<BackboneOutputs> outputs,
                                     std::span<const ContrastItem> batch, const ContrastConfig& cfg, Rng& rng) {
  cfg.validate();
  if (batch.empty()) throw std::invalid_argument("contrastive batch is empty");
  if (outputs.size() != batch.size()) throw std::invalid_argument("one backbone pass per batch item is required");
  ContrastTerms terms;
  std::vector<Var> sampled, pooled_max;
  std::vector<SampleMeta> metas;
  std::vector<int> activities;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const auto& item = batch[n];
    if (item.labels.size() != item.frames) throw ShapeError("contrastive labels do not cover every frame");
    Var f = multires_feature(g, outputs[n], item.frames, cfg.upsample_mode, true);
    const auto s = sample_frames(item.frames, cfg, rng);
    sampled.push_back(ops::gather_columns(g, f, s.indices));
    for (std::size_t i = 0; i < s.times.size(); ++i) {
      metas.push_back({n, s.times[i], item.labels[s.indices[i]], item.activity});
    }
    if (cfg.use_video_level) pooled_max.push_back(ops::max_over_time(g, f));
    activities.push_back(item.activity);
  }
  terms.outputs = std::move(outputs);
  Var all = sampled.size() == 1 ? sampled[0] : ops::concat_time(g, sampled);
  terms.frame = set_contrastive_loss(g, all, build_sets(metas, cfg.delta, cfg.use_video_level), cfg.tau);
  terms.total = terms.frame;
  if (cfg.use_video_level && std::set<int>(activities.begin(), activities.end()).size() >= 2) {
    const auto vsets = build_video_sets(activities);
    if (vsets.positive_count() > 0) {
      terms.video = set_contrastive_loss(g, ops::concat_time(g, pooled_max), vsets, cfg.tau);
      terms.total = ops::add(g, terms.frame, terms.video);
    }
  }
  return terms;
}

namespace {

Tensor stack_frames(const std::vector<const VideoSample*>& videos) {
  std::size_t total = 0;
  for (const auto* v : videos) total += v->frames();
  const std::size_t F = videos.front()->features.dim(1);
  Tensor out({total, F});
  std::size_t row = 0;
  for (const auto* v : videos) {
    std::copy(v->features.data().begin(), v->features.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(row * F));
    row += v->frames();
  }
  return out;
}

}  // namespace

std::vector<ContrastEpoch> train_contrastive(Backbone& backbone, const std::vector<const VideoSample*>& videos,
                                             const BatchLabeler& labeler, const PretrainConfig& cfg,
                                             const std::function<void(const ContrastEpoch&)>& on_epoch) {
  cfg.contrast.validate();
  cfg.augment.validate();
  if (videos.empty()) throw std::invalid_argument("contrastive training set is empty");
  if (cfg.batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (cfg.contrast.use_video_level && std::min(cfg.batch_size, videos.size()) < 2) {
    throw std::invalid_argument("video-level contrast needs batches of at least 2 videos");
  }
  Adam opt(backbone.parameters(), cfg.adam);
  opt.zero_grad();
  Rng sampler = make_stream(cfg.seed, "sampler");

  std::vector<std::size_t> order(videos.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<ContrastEpoch> trace;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), sampler);
    ContrastEpoch stats{epoch, 0.0};
    std::size_t batches = 0;
    std::size_t start = 0;
    while (start < order.size()) {
      std::size_t end = std::min(order.size(), start + cfg.batch_size);
      if (order.size() - end == 1) end = order.size();  // never leave a singleton batch
      std::vector<const VideoSample*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(videos[order[i]]);
      start = end;

      const auto labels = labeler(batch);
      std::vector<Tensor> inputs;
      for (const auto* v : batch) {
        std::size_t w = cfg.augment.enabled ? sample_window(cfg.augment, sampler) : cfg.augment.w0;
        w = std::min(w, v->frames());
        inputs.push_back(w > 1 ? pool_features(v->features, w) : v->features);
      }
      std::vector<ContrastItem> items;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        items.push_back({&inputs[i], batch[i]->frames(), labels.at(i), batch[i]->activity});
      }
      Graph g;
      auto terms = contrastive_batch_loss(g, backbone, items, cfg.contrast, sampler);
      stats.loss += g.value(terms.total)[0];
      g.backward(terms.total);
      opt.step();
      opt.zero_grad();
      ++batches;
    }
    stats.loss /= static_cast<double>(std::max<std::size_t>(batches, 1));
    trace.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return trace;
}

std::vector<ContrastEpoch> pretrain_unsupervised(Backbone& backbone, const std::vector<const VideoSample*>& videos,
                                                 std::size_t num_classes, const PretrainConfig& cfg,
                                                 const std::function<void(const ContrastEpoch&)>& on_epoch) {
  Rng cluster_rng = make_stream(cfg.seed, "cluster");
  const std::size_t k = cfg.contrast.effective_clusters(num_classes);
  auto labeler = [&](const std::vector<const VideoSample*>& batch) {
    const Tensor frames = stack_frames(batch);
    const auto clusters = kmeans(frames, std::min(k, frames.dim(0)), cluster_rng);
    std::vector<std::vector<int>> labels;
    std::size_t offset = 0;
    for (const auto* v : batch) {
      labels.emplace_back(clusters.assignments.begin() + static_cast<std::ptrdiff_t>(offset),
                          clusters.assignments.begin() + static_cast<std::ptrdiff_t>(offset + v->frames()));
      offset += v->frames();
    }
    return labels;
  };
  return train_contrastive(backbone, videos, labeler, cfg, on_epoch);
}

Tensor frozen_features(Backbone& backbone, const Tensor& frames, const LinearEvalConfig& cfg) {
  const std::size_t T = frames.dim(0);
  const std::size_t w = std::min(cfg.augment.w0, T);
  Graph g;
  auto out = backbone.forward(g, w > 1 ? pool_features(frames, w) : frames, ops::NormMode::eval);
  return g.value(multires_feature(g, out, T, cfg.upsample_mode, true));
}

Tensor LinearClassifier::standardize(const Tensor& features) const {
  Tensor out = features;
  for (std::size_t d = 0; d < out.dim(0); ++d) {
    for (auto& v : out.row(d)) v = (v - mean_[d]) * inv_std_[d];
  }
  return out;
}

void LinearClassifier::fit(const std::vector<Tensor>& features, const std::vector<std::span<const int>>& labels,
                           std::size_t num_classes, const LinearEvalConfig& cfg) {
  if (features.empty() || features.size() != labels.size()) throw std::invalid_argument("linear classifier needs labeled features");
  const std::size_t D = features.front().dim(0);
  std::size_t total = 0;
  for (const auto& f : features) total += f.dim(1);
  mean_ = Tensor({D});
  inv_std_ = Tensor({D});
  for (const auto& f : features) {
    for (std::size_t d = 0; d < D; ++d) {
      for (double v : f.row(d)) mean_[d] += v;
    }
  }
  for (std::size_t d = 0; d < D; ++d) mean_[d] /= static_cast<double>(total);
  for (const auto& f : features) {
    for (std::size_t d = 0; d < D; ++d) {
      for (double v : f.row(d)) inv_std_[d] += (v - mean_[d]) * (v - mean_[d]);
    }
  }
  for (std::size_t d = 0; d < D; ++d) {
    const double sd = std::sqrt(inv_std_[d] / static_cast<double>(total));
    inv_std_[d] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }

  Tensor x({D, total});
  std::vector<int> y;
  std::size_t col = 0;
  for (std::size_t n = 0; n < features.size(); ++n) {
    const Tensor s = standardize(features[n]);
    for (std::size_t d = 0; d < D; ++d) {
      std::copy(s.row(d).begin(), s.row(d).end(), x.row(d).begin() + static_cast<std::ptrdiff_t>(col));
    }
    col += s.dim(1);
    y.insert(y.end(), labels[n].begin(), labels[n].end());
  }
  weight_ = Parameter("linear.weight", Tensor({num_classes, D, 1}));
  bias_ = Parameter("linear.bias", Tensor({num_classes}));
  Adam opt({&weight_, &bias_}, cfg.adam);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.zero_grad();
    Graph g;
    Var input = g.constant(x);
    Var probs = ops::softmax(g, ops::conv1d(g, input, g.parameter(weight_), g.parameter(bias_), 0));
    g.backward(ops::cross_entropy(g, probs, y));
    opt.step();
  }
}

Tensor LinearClassifier::probs(const Tensor& features) const {
  Graph g;
  Var input = g.constant(standardize(features));
  Var logits = ops::conv1d(g, input, g.constant(weight_.value), g.constant(bias_.value), 0);
  return g.value(ops::softmax(g, logits));
}

SegReport linear_eval(Backbone& backbone, const std::vector<const VideoSample*>& train,
                      const std::vector<const VideoSample*>& test, std::size_t num_classes,
                      const LinearEvalConfig& cfg, bool raw_inputs) {
  auto features_of = [&](const VideoSample& v) {
    return raw_inputs ? v.features.transposed() : frozen_features(backbone, v.features, cfg);
  };
  std::vector<Tensor> feats;
  std::vector<std::span<const int>> labels;
  for (const auto* v : train) {
    feats.push_back(features_of(*v));
    labels.emplace_back(v->labels);
  }
  LinearClassifier clf;
  clf.fit(feats, labels, num_classes, cfg);
  SegmentationScorer scorer;
  for (const auto* v : test) scorer.add(predict(clf.probs(features_of(*v))), v->labels);
  return scorer.report();
}

}  // namespace c2f
