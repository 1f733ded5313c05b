#include "c2f/icc.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

#include "c2f/ensemble.hpp"

namespace c2f {

AuditedVideos::AuditedVideos(const Dataset& data, const SplitSpec& split) {
  std::map<std::string, const VideoSample*> by_id;
  for (const auto& v : data.videos) by_id[v.id] = &v;
  auto resolve = [&](const std::string& id) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw std::invalid_argument("split names unknown video '" + id + "'");
    if (it->second->split != Split::train) throw std::invalid_argument("split uses test video '" + id + "'");
    return it->second;
  };
  for (const auto& id : split.labeled) labeled_.push_back(resolve(id));
  for (const auto& id : split.unlabeled) unlabeled_.push_back(resolve(id));
  for (auto* v : labeled_) side_[v] = true;
  for (auto* v : unlabeled_) {
    if (!side_.emplace(v, false).second) throw std::invalid_argument("video '" + v->id + "' is on both sides of the split");
  }
  if (labeled_.empty()) throw std::invalid_argument("split has no labeled videos");
}

bool AuditedVideos::is_labeled(const VideoSample& v) const {
  auto it = side_.find(&v);
  return it != side_.end() && it->second;
}

std::span<const int> AuditedVideos::labels(const VideoSample& v) {
  auto it = side_.find(&v);
  if (it == side_.end()) throw std::invalid_argument("video '" + v.id + "' is not part of the split");
  if (it->second) {
    ++labeled_reads_;
  } else {
    ++unlabeled_reads_;
  }
  return v.labels;
}

void ICCConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) throw std::invalid_argument("labeled fraction must lie in (0, 1]");
  if (lr_G < 0 || lr_M_classify < 0 || lr_M_contrast < 0) throw std::invalid_argument("learning rates must be >= 0");
  if (lr_M_classify > lr_G) throw std::invalid_argument("lr_M_classify should be far below lr_G");
  if (contrast_batch == 0 || classify_batch == 0) throw std::invalid_argument("batch sizes must be positive");
  contrast.validate();
  augment.validate();
  loss.validate();
}

void classify_step(Model& model, AuditedVideos& data, const ICCConfig& cfg, std::uint64_t seed) {
  const auto& videos = data.labeled();
  if (videos.empty()) throw std::invalid_argument("classify step needs labeled videos");
  model.reset_heads(seed);
  Adam opt_g(model.heads().parameters(), {.lr = cfg.lr_G, .weight_decay = cfg.weight_decay});
  const bool tune_m = cfg.lr_M_classify > 0.0;
  Adam opt_m(model.backbone().parameters(), {.lr = cfg.lr_M_classify, .weight_decay = cfg.weight_decay});
  opt_g.zero_grad();
  opt_m.zero_grad();
  Rng rng = make_stream(seed, "classify");
  LossConfig loss = cfg.loss;
  if (!cfg.classify_transition) loss.lambda_tr = 0.0;

  std::vector<std::size_t> order(videos.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.classify_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.classify_batch) {
      const std::size_t end = std::min(order.size(), start + cfg.classify_batch);
      Graph g;
      std::vector<Tensor> inputs;
      std::vector<std::size_t> windows;
      std::vector<std::span<const int>> truth;
      for (std::size_t i = start; i < end; ++i) {
        const auto& v = *videos[order[i]];
        std::size_t w = cfg.augment.enabled ? sample_window(cfg.augment, rng) : cfg.augment.w0;
        w = std::min(w, v.frames());
        inputs.push_back(w > 1 ? pool_features(v.features, w) : v.features);
        windows.push_back(w);
        truth.push_back(data.labels(v));
      }
      std::vector<BackboneOutputs> outputs;
      std::vector<Var> losses;
      for (std::size_t b = 0; b < inputs.size(); ++b) {
        auto out = model.backbone().forward(g, inputs[b], ops::NormMode::train);
        const auto probs = model.heads().apply(g, out);
        Var ens = c2f_ensemble(g, probs, model.heads().ensemble_weights(g));
        const std::size_t w = windows[b];
        const auto pooled_labels = w > 1 ? pool_labels(truth[b], w) : std::vector<int>(truth[b].begin(), truth[b].end());
        losses.push_back(joint_loss(g, ens, pooled_labels, loss).total);
        outputs.push_back(std::move(out));
      }
      const std::vector<double> mean(losses.size(), 1.0 / static_cast<double>(losses.size()));
      Var total = ops::weighted_sum(g, losses, mean);
      if (tune_m) {
        std::vector<ContrastItem> items;
        for (std::size_t b = 0; b < inputs.size(); ++b) {
          const auto& v = *videos[order[start + b]];
          items.push_back({&inputs[b], v.frames(), truth[b], v.activity});
        }
        ContrastConfig contrast = cfg.contrast;
        if (items.size() < 2) contrast.use_video_level = false;
        auto terms = contrastive_batch_loss(g, std::move(outputs), items, contrast, rng);
        total = ops::add(g, total, terms.total);
      }
      g.backward(total);
      opt_g.step();
      opt_g.zero_grad();
      if (tune_m) opt_m.step();
      opt_m.zero_grad();
    }
  }
}

std::vector<int> pseudo_label(Model& model, const VideoSample& video, const AugmentConfig& augment) {
  return predict(segment_probs(model, video.features, augment.w0));
}

void contrast_step(Model& model, AuditedVideos& data, const std::map<const VideoSample*, std::vector<int>>& pseudo,
                   const ICCConfig& cfg, std::uint64_t seed) {
  std::vector<const VideoSample*> videos = data.labeled();
  for (const auto* v : data.unlabeled()) {
    if (!pseudo.contains(v)) throw std::invalid_argument("missing pseudo-labels for '" + v->id + "'");
    videos.push_back(v);
  }
  auto labeler = [&](const std::vector<const VideoSample*>& batch) {
    std::vector<std::vector<int>> out;
    for (const auto* v : batch) {
      if (data.is_labeled(*v)) {
        const auto y = data.labels(*v);
        out.emplace_back(y.begin(), y.end());
      } else {
        out.push_back(pseudo.at(v));
      }
    }
    return out;
  };
  PretrainConfig pc;
  pc.contrast = cfg.contrast;
  pc.augment = cfg.augment;
  pc.adam = {.lr = cfg.lr_M_contrast, .weight_decay = cfg.weight_decay};
  pc.epochs = cfg.contrast_epochs;
  pc.batch_size = cfg.contrast_batch;
  pc.seed = seed;
  train_contrastive(model.backbone(), videos, labeler, pc);
}

std::vector<ICCReport> run_icc(Model& model, AuditedVideos& data, const std::vector<const VideoSample*>& test,
                               const ICCConfig& cfg, const ICCProgress& progress) {
  cfg.validate();
  auto note = [&](const std::string& stage, const ICCReport* r = nullptr) {
    if (progress) progress(stage, r);
  };
  EvalOptions eval;
  eval.augment = cfg.augment;
  eval.seed = cfg.seed;

  if (!cfg.skip_unsupervised) {
    std::vector<const VideoSample*> all = data.labeled();
    all.insert(all.end(), data.unlabeled().begin(), data.unlabeled().end());
    PretrainConfig pc;
    pc.contrast = cfg.contrast;
    pc.augment = cfg.augment;
    pc.adam = {.lr = cfg.lr_M_contrast, .weight_decay = cfg.weight_decay};
    pc.epochs = cfg.pretrain_epochs;
    pc.batch_size = cfg.contrast_batch;
    pc.seed = derive_seed(cfg.seed, "pretrain");
    note("contrast 1 (unsupervised)");
    pretrain_unsupervised(model.backbone(), all, model.config().num_classes, pc);
  }

  std::vector<ICCReport> reports;
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    ICCReport report;
    report.iteration = it;
    if (it > 1) {
      std::map<const VideoSample*, std::vector<int>> pseudo;
      SegmentationScorer pseudo_score;
      for (const auto* v : data.unlabeled()) {
        pseudo[v] = pseudo_label(model, *v, cfg.augment);
        pseudo_score.add(pseudo[v], v->labels);  // scoring only; never fed back
      }
      if (!data.unlabeled().empty()) report.pseudo_label_mof = pseudo_score.report().mof;
      note("contrast " + std::to_string(it));
      contrast_step(model, data, pseudo, cfg, derive_seed(cfg.seed, "contrast" + std::to_string(it)));
    }
    note("classify " + std::to_string(it));
    classify_step(model, data, cfg, derive_seed(cfg.seed, "classify" + std::to_string(it)));
    report.test = evaluate(model, test, eval);
    SegmentationScorer fit;
    for (const auto* v : data.labeled()) fit.add(pseudo_label(model, *v, cfg.augment), v->labels);
    report.labeled_train = fit.report();
    reports.push_back(report);
    note("report", &reports.back());
  }
  return reports;
}

}  // namespace c2f
