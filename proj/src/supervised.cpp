#include "c2f/supervised.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "c2f/ensemble.hpp"

namespace c2f {

void LossConfig::validate() const {
  if (lambda_tr < 0.0) throw std::invalid_argument("lambda_tr must be >= 0");
  if (!(eps_max > 0.0)) throw std::invalid_argument("eps_max must be > 0");
}

JointLoss joint_loss(Graph& g, Var p_ens, std::span<const int> labels, const LossConfig& cfg) {
  cfg.validate();
  JointLoss out;
  out.ce = ops::cross_entropy(g, p_ens, labels);
  out.total = out.ce;
  if (g.value(p_ens).dim(1) >= 2) {
    out.tr = ops::transition_loss(g, p_ens, cfg.eps_max);
    if (cfg.lambda_tr > 0.0) out.total = ops::add(g, out.ce, ops::scale(g, out.tr, cfg.lambda_tr));
  }
  return out;
}

Var activity_loss(Graph& g, Var p_activity, int activity) {
  const auto& p = g.value(p_activity);
  if (p.ndim() != 2 || p.dim(1) != 1) throw ShapeError("activity probabilities must be [C_V x 1]");
  const int y[] = {activity};
  return ops::cross_entropy(g, p_activity, y);
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  augment.validate();
  loss.validate();
}

namespace {

struct PooledSample {
  Tensor features;
  std::vector<int> labels;
};

PooledSample pooled(const VideoSample& v, const AugmentConfig& aug, Rng& rng) {
  std::size_t w = aug.enabled ? sample_window(aug, rng) : aug.w0;
  w = std::min(w, v.frames());
  if (w <= 1) return {v.features, v.labels};
  return {pool_features(v.features, w), pool_labels(v.labels, w)};
}

template <typename StepFn>
std::vector<EpochStats> run_epochs(const std::vector<const VideoSample*>& videos, const TrainConfig& cfg,
                                   std::vector<Parameter*> params, const EpochCallback& on_epoch, StepFn&& step) {
  cfg.validate();
  if (videos.empty()) throw std::invalid_argument("training set is empty");
  Adam opt(std::move(params), cfg.adam);
  opt.zero_grad();
  Rng rng = make_stream(cfg.seed, "sampler");
  std::vector<std::size_t> order(videos.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochStats> trace;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats stats{epoch, 0.0, 0.0, 0.0};
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i) step(*videos[order[i]], inv, rng, stats);
      opt.step();
      opt.zero_grad();
    }
    const double n = static_cast<double>(videos.size());
    stats.ce /= n;
    stats.tr /= n;
    stats.total /= n;
    trace.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return trace;
}

}  // namespace

std::vector<EpochStats> train_supervised(Model& model, const std::vector<const VideoSample*>& videos,
                                         const TrainConfig& cfg, const EpochCallback& on_epoch) {
  std::vector<Parameter*> params = model.backbone().parameters();
  for (auto* p : model.heads().parameters()) params.push_back(p);
  const std::size_t C = model.config().num_classes;
  for (const auto* v : videos) {
    for (int y : v->labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= C) throw std::out_of_range(v->id + ": label outside the model's classes");
    }
  }
  return run_epochs(videos, cfg, std::move(params), on_epoch,
                    [&](const VideoSample& v, double inv, Rng& rng, EpochStats& stats) {
                      const auto sample = pooled(v, cfg.augment, rng);
                      Graph g;
                      auto out = model.forward(g, sample.features, ops::NormMode::train);
                      Var loss;
                      if (cfg.loss_per_layer) {
                        std::vector<Var> terms;
                        for (auto p : out.probs) {
                          const auto jl = joint_loss(g, p, sample.labels, cfg.loss);
                          terms.push_back(jl.total);
                          stats.ce += g.value(jl.ce)[0] / static_cast<double>(out.probs.size());
                          if (jl.tr.valid()) stats.tr += g.value(jl.tr)[0] / static_cast<double>(out.probs.size());
                        }
                        const std::vector<double> w(terms.size(), 1.0 / static_cast<double>(terms.size()));
                        loss = ops::weighted_sum(g, terms, w);
                      } else {
                        Var ens = c2f_ensemble(g, out.probs, model.heads().ensemble_weights(g));
                        const auto jl = joint_loss(g, ens, sample.labels, cfg.loss);
                        loss = jl.total;
                        stats.ce += g.value(jl.ce)[0];
                        if (jl.tr.valid()) stats.tr += g.value(jl.tr)[0];
                      }
                      stats.total += g.value(loss)[0];
                      g.backward(ops::scale(g, loss, inv));
                    });
}

std::vector<EpochStats> train_activity(Model& model, const std::vector<const VideoSample*>& videos,
                                       const TrainConfig& cfg, const EpochCallback& on_epoch) {
  std::vector<Parameter*> params = model.backbone().parameters();
  for (auto* p : model.activity_head().parameters()) params.push_back(p);
  const std::size_t CV = model.config().num_activities;
  for (const auto* v : videos) {
    if (v->activity < 0 || static_cast<std::size_t>(v->activity) >= CV) {
      throw std::out_of_range(v->id + ": activity outside the model's activities");
    }
  }
  return run_epochs(videos, cfg, std::move(params), on_epoch,
                    [&](const VideoSample& v, double inv, Rng& rng, EpochStats& stats) {
                      const auto sample = pooled(v, cfg.augment, rng);
                      Graph g;
                      auto features = model.backbone().forward(g, sample.features, ops::NormMode::train);
                      Var loss = activity_loss(g, model.activity_probs(g, features), v.activity);
                      stats.ce += g.value(loss)[0];
                      stats.total += g.value(loss)[0];
                      g.backward(ops::scale(g, loss, inv));
                    });
}

double activity_accuracy(Model& model, const std::vector<const VideoSample*>& videos, const AugmentConfig& augment) {
  if (videos.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto* v : videos) {
    Graph g;
    const std::size_t w = std::min(augment.w0, v->frames());
    auto features = model.backbone().forward(g, w > 1 ? pool_features(v->features, w) : v->features, ops::NormMode::eval);
    const auto pred = predict(g.value(model.activity_probs(g, features)));
    hit += pred[0] == v->activity;
  }
  return 100.0 * static_cast<double>(hit) / static_cast<double>(videos.size());
}

SegReport evaluate(Backbone& backbone, SegmentationHeads& heads, const std::vector<const VideoSample*>& videos,
                   const EvalOptions& opts, std::vector<Tensor>* probs_out) {
  SegmentationScorer scorer(opts.per_video_f1);
  Rng rng = make_stream(opts.seed, "tta");
  for (const auto* v : videos) {
    Tensor p = infer_probs(backbone, heads, v->features, opts.augment, opts.tta, rng, opts.layer);
    scorer.add(predict(p), v->labels);
    if (probs_out) probs_out->push_back(std::move(p));
  }
  return scorer.report();
}

SegReport evaluate(Model& model, const std::vector<const VideoSample*>& videos, const EvalOptions& opts,
                   std::vector<Tensor>* probs_out) {
  return evaluate(model.backbone(), model.heads(), videos, opts, probs_out);
}

}  // namespace c2f
