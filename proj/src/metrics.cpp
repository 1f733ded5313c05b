#include "c2f/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "c2f/ensemble.hpp"

namespace c2f {

std::vector<Segment> segments_from_labels(std::span<const int> labels) {
  std::vector<Segment> out;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (out.empty() || out.back().label != labels[t]) {
      out.push_back({labels[t], t, t + 1});
    } else {
      out.back().end = t + 1;
    }
  }
  return out;
}

std::vector<int> flatten_segments(std::span<const Segment> segments) {
  std::vector<int> out;
  for (const auto& s : segments) out.insert(out.end(), s.length(), s.label);
  return out;
}

namespace {

void require_same_length(std::span<const int> pred, std::span<const int> gt) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("prediction has " + std::to_string(pred.size()) + " frames, ground truth " +
                                std::to_string(gt.size()));
  }
}

std::size_t levenshtein(const std::vector<Segment>& a, const std::vector<Segment>& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1].label == b[j - 1].label ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double mof(std::span<const int> pred, std::span<const int> gt) {
  require_same_length(pred, gt);
  if (gt.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t t = 0; t < gt.size(); ++t) hit += pred[t] == gt[t];
  return 100.0 * static_cast<double>(hit) / static_cast<double>(gt.size());
}

double edit_score(std::span<const int> pred, std::span<const int> gt) {
  const auto p = segments_from_labels(pred);
  const auto g = segments_from_labels(gt);
  const std::size_t longest = std::max(p.size(), g.size());
  if (longest == 0) return 100.0;
  return 100.0 * (1.0 - static_cast<double>(levenshtein(p, g)) / static_cast<double>(longest));
}

double segment_iou(const Segment& a, const Segment& b) {
  const std::size_t lo = std::max(a.start, b.start);
  const std::size_t hi = std::min(a.end, b.end);
  const double inter = hi > lo ? static_cast<double>(hi - lo) : 0.0;
  const double uni = static_cast<double>(a.length() + b.length()) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

F1Counts f1_counts(std::span<const int> pred, std::span<const int> gt, double k, IoUComparison cmp) {
  require_same_length(pred, gt);
  const auto p = segments_from_labels(pred);
  const auto g = segments_from_labels(gt);
  std::vector<bool> matched(g.size(), false);
  F1Counts c;
  for (const auto& ps : p) {
    double best = -1.0;
    std::size_t best_idx = g.size();
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (matched[j] || g[j].label != ps.label) continue;
      const double iou = segment_iou(ps, g[j]);
      if (iou > best) {
        best = iou;
        best_idx = j;
      }
    }
    const bool pass = best_idx < g.size() && (cmp == IoUComparison::strict ? best > k : best >= k);
    if (pass) {
      ++c.tp;
      matched[best_idx] = true;
    } else {
      ++c.fp;
    }
  }
  c.fn = g.size() - c.tp;
  return c;
}

double f1_from_counts(const F1Counts& c) {
  if (c.tp == 0) return 0.0;
  const double precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  const double recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

double f1_at_k(std::span<const int> pred, std::span<const int> gt, double k, IoUComparison cmp) {
  return f1_from_counts(f1_counts(pred, gt, k, cmp));
}

void SegmentationScorer::add(std::span<const int> pred, std::span<const int> gt) {
  require_same_length(pred, gt);
  for (std::size_t t = 0; t < gt.size(); ++t) correct_ += pred[t] == gt[t];
  frames_ += gt.size();
  ++videos_;
  edit_sum_ += edit_score(pred, gt);
  for (std::size_t i = 0; i < kF1Thresholds.size(); ++i) {
    const auto c = f1_counts(pred, gt, kF1Thresholds[i], cmp_);
    pooled_[i] += c;
    f1_sum_[i] += f1_from_counts(c);
  }
}

SegReport SegmentationScorer::report() const {
  SegReport r;
  r.frames = frames_;
  r.videos = videos_;
  if (videos_ == 0) return r;
  r.mof = 100.0 * static_cast<double>(correct_) / static_cast<double>(frames_);
  r.edit = edit_sum_ / static_cast<double>(videos_);
  std::array<double, 3> f1{};
  for (std::size_t i = 0; i < 3; ++i) {
    f1[i] = per_video_f1_ ? f1_sum_[i] / static_cast<double>(videos_) : f1_from_counts(pooled_[i]);
  }
  r.f1_10 = f1[0];
  r.f1_25 = f1[1];
  r.f1_50 = f1[2];
  return r;
}

namespace {

double entropy_of_column(const Tensor& probs, std::size_t t) {
  double h = 0.0;
  for (std::size_t k = 0; k < probs.dim(0); ++k) {
    const double p = probs(k, t);
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace

CalibrationAccumulator::CalibrationAccumulator(std::size_t bins, std::size_t entropy_bins)
    : bins_(bins), entropy_bins_(entropy_bins), count_(bins), correct_(bins), conf_sum_(bins) {
  if (bins == 0 || entropy_bins == 0) throw std::invalid_argument("calibration needs at least one bin");
}

void CalibrationAccumulator::add(const Tensor& probs, std::span<const int> gt) {
  if (probs.ndim() != 2 || probs.dim(1) != gt.size()) {
    throw ShapeError("calibration probabilities " + probs.shape_string() + " do not match " +
                     std::to_string(gt.size()) + " labels");
  }
  classes_ = std::max(classes_, probs.dim(0));
  const auto pred = predict(probs);
  for (std::size_t t = 0; t < gt.size(); ++t) {
    const double conf = probs(static_cast<std::size_t>(pred[t]), t);
    const bool correct = pred[t] == gt[t];
    if (!correct) entropies_.push_back(entropy_of_column(probs, t));
    if (!(conf > 0.0)) continue;
    // Bin n covers (n/N, (n+1)/N].
    const double scaled = std::ceil(conf * static_cast<double>(bins_)) - 1.0;
    const auto n = static_cast<std::size_t>(std::clamp(scaled, 0.0, static_cast<double>(bins_ - 1)));
    ++count_[n];
    correct_[n] += correct;
    conf_sum_[n] += conf;
    ++frames_;
  }
}

CalibrationReport CalibrationAccumulator::report() const {
  CalibrationReport r;
  r.frames = frames_;
  for (std::size_t n = 0; n < bins_; ++n) {
    CalibrationBin b;
    b.lo = static_cast<double>(n) / static_cast<double>(bins_);
    b.hi = static_cast<double>(n + 1) / static_cast<double>(bins_);
    b.count = count_[n];
    if (b.count) {
      b.acc = static_cast<double>(correct_[n]) / static_cast<double>(b.count);
      b.conf = conf_sum_[n] / static_cast<double>(b.count);
    }
    r.bins.push_back(b);
  }
  if (!entropies_.empty()) {
    const double hmax = std::log(static_cast<double>(std::max<std::size_t>(classes_, 2)));
    for (std::size_t n = 0; n < entropy_bins_; ++n) {
      r.wrong_entropy.push_back({hmax * static_cast<double>(n) / static_cast<double>(entropy_bins_),
                                 hmax * static_cast<double>(n + 1) / static_cast<double>(entropy_bins_), 0});
    }
    for (double h : entropies_) {
      auto n = static_cast<std::size_t>(h / hmax * static_cast<double>(entropy_bins_));
      r.wrong_entropy[std::min(n, entropy_bins_ - 1)].count++;
    }
  }
  return r;
}

CalibrationReport calibration(const Tensor& probs, std::span<const int> gt, std::size_t bins) {
  CalibrationAccumulator acc(bins);
  acc.add(probs, gt);
  return acc.report();
}

std::vector<double> wrong_entropy(const Tensor& probs, std::span<const int> gt) {
  CalibrationAccumulator acc;
  acc.add(probs, gt);
  return acc.wrong_entropies();
}

}  // namespace c2f
