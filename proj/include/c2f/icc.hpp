#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "c2f/contrastive.hpp"
#include "c2f/dataset.hpp"
#include "c2f/supervised.hpp"

namespace c2f {

/// Gives the semi-supervised pipeline its videos while counting every
/// ground-truth label read, per side of the split. Reads of unlabeled-video
/// labels are legal only for final scoring and are counted separately.
class AuditedVideos {
 public:
  AuditedVideos(const Dataset& data, const SplitSpec& split);

  const std::vector<const VideoSample*>& labeled() const { return labeled_; }
  const std::vector<const VideoSample*>& unlabeled() const { return unlabeled_; }

  /// Ground truth of a labeled video.
  std::span<const int> labels(const VideoSample& v);
  bool is_labeled(const VideoSample& v) const;

  std::size_t labeled_reads() const { return labeled_reads_; }
  std::size_t unlabeled_reads() const { return unlabeled_reads_; }

 private:
  std::vector<const VideoSample*> labeled_;
  std::vector<const VideoSample*> unlabeled_;
  std::map<const VideoSample*, bool> side_;
  std::size_t labeled_reads_ = 0;
  std::size_t unlabeled_reads_ = 0;
};

struct ICCConfig {
  std::size_t iterations = 4;
  double labeled_fraction = 0.1;
  bool skip_unsupervised = false;
  /// Whether the classify step adds the transition loss to its cross-entropy.
  bool classify_transition = false;

  double lr_G = 1e-2;
  double lr_M_classify = 1e-5;
  double lr_M_contrast = 1e-3;
  double weight_decay = 1e-3;
  std::size_t pretrain_epochs = 100;
  std::size_t contrast_epochs = 30;
  std::size_t classify_epochs = 150;
  std::size_t contrast_batch = 10;
  std::size_t classify_batch = 5;

  ContrastConfig contrast;
  AugmentConfig augment;
  LossConfig loss;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ICCReport {
  std::size_t iteration = 0;  // 1-based
  SegReport test;
  SegReport labeled_train;    // fit on D_L after the classify step
  double pseudo_label_mof = -1.0;  // vs. ground truth of D_U; scoring only, -1 when not computed
};

/// Fresh heads G, then G trained on D_L with cross-entropy on the ensemble
/// while M is fine-tuned at lr_M_classify with cross-entropy plus the
/// contrastive loss on ground-truth labels.
void classify_step(Model& model, AuditedVideos& data, const ICCConfig& cfg, std::uint64_t seed);

/// Ensemble-argmax labels at the original frame rate (inference window w0).
std::vector<int> pseudo_label(Model& model, const VideoSample& video, const AugmentConfig& augment);

/// Contrastive update of M on D_U (pseudo-labels) and D_L (ground truth).
void contrast_step(Model& model, AuditedVideos& data, const std::map<const VideoSample*, std::vector<int>>& pseudo,
                   const ICCConfig& cfg, std::uint64_t seed);

using ICCProgress = std::function<void(const std::string& stage, const ICCReport* report)>;

/// Iterative contrast-classify. Iteration 1's contrast step is unsupervised
/// pretraining (unless skipped); every iteration ends with a classify step
/// and a test report.
std::vector<ICCReport> run_icc(Model& model, AuditedVideos& data, const std::vector<const VideoSample*>& test,
                               const ICCConfig& cfg, const ICCProgress& progress = {});

}  // namespace c2f
