#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "c2f/tensor.hpp"

namespace c2f {

/// Maximal run of one label over frames [start, end).
struct Segment {
  int label = 0;
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  bool operator==(const Segment&) const = default;
};

std::vector<Segment> segments_from_labels(std::span<const int> labels);
std::vector<int> flatten_segments(std::span<const Segment> segments);

/// Frame accuracy in percent.
double mof(std::span<const int> pred, std::span<const int> gt);

/// 100 * (1 - levenshtein(segment labels) / max segment count).
double edit_score(std::span<const int> pred, std::span<const int> gt);

enum class IoUComparison { strict, inclusive };

struct F1Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  F1Counts& operator+=(const F1Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

double segment_iou(const Segment& a, const Segment& b);

/// Greedy matching in prediction order: each predicted segment takes the
/// best-IoU unmatched ground-truth segment of its label if the IoU passes k.
F1Counts f1_counts(std::span<const int> pred, std::span<const int> gt, double k,
                   IoUComparison cmp = IoUComparison::strict);

/// F1 in percent; zero when there are no true positives.
double f1_from_counts(const F1Counts& c);
double f1_at_k(std::span<const int> pred, std::span<const int> gt, double k,
               IoUComparison cmp = IoUComparison::strict);

inline constexpr std::array<double, 3> kF1Thresholds{0.10, 0.25, 0.50};

struct SegReport {
  double mof = 0.0;
  double edit = 0.0;
  double f1_10 = 0.0;
  double f1_25 = 0.0;
  double f1_50 = 0.0;
  std::size_t frames = 0;
  std::size_t videos = 0;
};

/// Dataset-level scores: MoF pools frames, Edit averages videos, F1 pools
/// TP/FP/FN (or averages per-video F1 when `per_video_f1`).
class SegmentationScorer {
 public:
  explicit SegmentationScorer(bool per_video_f1 = false, IoUComparison cmp = IoUComparison::strict)
      : per_video_f1_(per_video_f1), cmp_(cmp) {}

  void add(std::span<const int> pred, std::span<const int> gt);
  SegReport report() const;

 private:
  bool per_video_f1_;
  IoUComparison cmp_;
  std::size_t correct_ = 0;
  std::size_t frames_ = 0;
  std::size_t videos_ = 0;
  double edit_sum_ = 0.0;
  std::array<F1Counts, 3> pooled_{};
  std::array<double, 3> f1_sum_{};
};

struct CalibrationBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double acc = 0.0;
  double conf = 0.0;
  double gap() const { return count ? acc - conf : 0.0; }  // > 0: under-confident
};

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

struct CalibrationReport {
  std::vector<CalibrationBin> bins;
  std::vector<HistogramBin> wrong_entropy;
  std::size_t frames = 0;
};

/// Accumulates confidence/accuracy bins (lo, hi] and the entropy of wrongly
/// classified frames over any number of videos. Probabilities are [C x T].
class CalibrationAccumulator {
 public:
  explicit CalibrationAccumulator(std::size_t bins = 15, std::size_t entropy_bins = 20);

  void add(const Tensor& probs, std::span<const int> gt);
  CalibrationReport report() const;
  const std::vector<double>& wrong_entropies() const { return entropies_; }

 private:
  std::size_t bins_;
  std::size_t entropy_bins_;
  std::size_t classes_ = 0;
  std::vector<std::size_t> count_;
  std::vector<std::size_t> correct_;
  std::vector<double> conf_sum_;
  std::vector<double> entropies_;
  std::size_t frames_ = 0;
};

CalibrationReport calibration(const Tensor& probs, std::span<const int> gt, std::size_t bins = 15);

/// Shannon entropy (nats) of every frame whose argmax differs from gt.
std::vector<double> wrong_entropy(const Tensor& probs, std::span<const int> gt);

}  // namespace c2f
