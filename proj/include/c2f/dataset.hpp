#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "c2f/tensor.hpp"

namespace c2f {

/// Malformed or inconsistent on-disk data.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { train, test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

/// One video: frame features V [T x F], frame labels y, complex-activity id c.
struct VideoSample {
  std::string id;
  Tensor features;
  std::vector<int> labels;
  int activity = 0;
  Split split = Split::train;

  std::size_t frames() const { return features.dim(0); }
};

struct Dataset {
  std::vector<VideoSample> videos;
  std::vector<std::string> class_names;
  std::size_t num_activities = 0;

  std::size_t num_classes() const { return class_names.size(); }
  std::size_t feature_dim() const { return videos.empty() ? 0 : videos.front().features.dim(1); }
  std::vector<const VideoSample*> split(Split s) const;
};

struct ManifestEntry {
  std::string id;
  std::string features;  // relative to the dataset directory
  std::string labels;
  int activity = 0;
  Split split = Split::train;
};

// Binary features: "C2FT", u32 version (1), u32 T, u32 F, T*F little-endian f32 row-major.
void save_features(const std::filesystem::path& path, const Tensor& features);
Tensor load_features(const std::filesystem::path& path);

// Labels: one action name per frame per line; mapping lines are "id name".
void save_labels(const std::filesystem::path& path, const std::vector<int>& labels,
                 const std::vector<std::string>& names);
std::vector<int> load_labels(const std::filesystem::path& path, const std::vector<std::string>& names);
void save_mapping(const std::filesystem::path& path, const std::vector<std::string>& names);
std::vector<std::string> load_mapping(const std::filesystem::path& path);

void save_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

/// Writes features/, labels/, mapping.txt and manifest.json under `dir`.
std::vector<ManifestEntry> save_dataset(const std::filesystem::path& dir, const Dataset& data);
/// Loads a directory written by save_dataset (or laid out the same way).
Dataset load_dataset(const std::filesystem::path& dir);

/// Synthetic stand-in for pre-extracted video features. Each activity owns a
/// fixed action order; videos walk that order with random segment lengths.
/// Frames are an action-specific mean plus a large per-video offset and
/// per-frame noise, smoothed by a moving average. The offset defeats
/// per-frame linear classifiers but is removed by per-video normalization.
/// `flip_prob` optionally mirrors the mean of random segments.
struct SyntheticConfig {
  std::size_t num_videos = 60;
  std::size_t num_actions = 6;
  std::size_t num_activities = 3;
  std::size_t feat_dim = 32;
  std::size_t min_frames = 512;
  std::size_t max_frames = 1024;
  std::size_t min_segments = 4;
  std::size_t max_segments = 8;
  std::size_t actions_per_activity = 4;
  double sigma_between = 1.0;  // spread of action means
  double sigma_within = 0.95;  // per-frame noise
  double sigma_video = 3.0;    // per-video offset shared by all frames
  double flip_prob = 0.0;      // chance that a segment uses the mirrored mean
  std::size_t smoothing = 2;   // moving-average radius in frames
  double label_noise = 0.0;    // probability of replacing a stored frame label
  double test_fraction = 0.25;
  std::uint64_t seed = 0;

  void validate(std::size_t min_model_frames = 1) const;
};

Dataset generate_synthetic(const SyntheticConfig& cfg);

/// Labeled/unlabeled partition of the training videos (by index into the
/// training split).
struct SplitSpec {
  std::vector<std::string> labeled;
  std::vector<std::string> unlabeled;
  std::uint64_t seed = 0;
  bool covers_all_classes = true;
};

/// Uniform random labeled subset of max(3, floor(fraction * n)) videos (capped
/// at n), retried up to 20 times until every class appears in it.
SplitSpec make_split(const std::vector<const VideoSample*>& train, std::size_t num_classes, double labeled_fraction,
                     std::uint64_t seed);

}  // namespace c2f
