#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "c2f/graph.hpp"

// Differentiable 1-D temporal operations. Sequence tensors are channel-major
// [C x T]; every op records itself on the graph it is given.
namespace c2f::ops {

enum class UpsampleMode { linear, nearest };
enum class PoolRounding { ceil, floor_min1 };
/// train: statistics of the current sample, running averages updated.
/// eval: running averages. sample: statistics of the current sample, no update.
enum class NormMode { train, eval, sample };

/// Running statistics owned by a batch-norm layer.
struct NormStats {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  NormStats() = default;
  explicit NormStats(std::size_t channels)
      : running_mean({channels}, 0.0), running_var({channels}, 1.0) {}
};

/// Same-length cross-correlation with zero padding. `bias` may be an invalid Var.
Var conv1d(Graph& g, Var x, Var weight, Var bias, std::size_t pad);

/// Max-pool over non-overlapping windows. Ceil rounding keeps a truncated
/// final window; floor_min1 drops the remainder but always emits >= 1 output.
/// Ties route the gradient to the lowest index.
Var maxpool1d(Graph& g, Var x, std::size_t window, PoolRounding rounding = PoolRounding::ceil);

/// Global temporal max, [C x T] -> [C x 1].
Var max_over_time(Graph& g, Var x);

/// Linear mode maps target j to source j*(T-1)/(L-1) (align corners);
/// nearest maps j to floor(j*T/L).
Var upsample1d(Graph& g, Var x, std::size_t target_len, UpsampleMode mode);

/// Per-channel normalization over the temporal axis of one sample.
Var batchnorm1d(Graph& g, Var x, Var gamma, Var beta, NormStats& stats, NormMode mode);

Var relu(Graph& g, Var x);

/// Softmax over axis 0 of a [C x T] tensor (per column), max-shifted.
Var softmax(Graph& g, Var x);

Var concat_channels(Graph& g, std::span<const Var> parts);

/// Concatenates [C x T_i] tensors along time.
Var concat_time(Graph& g, std::span<const Var> parts);
Var add(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var x, double s);

/// sum_u w[u] * parts[u]; all parts share one shape.
Var weighted_sum(Graph& g, std::span<const Var> parts, std::span<const double> weights);
/// Same, with the weights taken from a [U x 1] graph value.
Var weighted_sum(Graph& g, std::span<const Var> parts, Var weights);

/// Per-column L2 normalization, x / max(|x|, 1e-12). An all-zero column
/// raises NumericError unless `allow_zero`, in which case it stays zero.
Var l2_normalize_columns(Graph& g, Var x, bool allow_zero = false);

Var gather_columns(Graph& g, Var x, std::span<const std::size_t> columns);

/// Extends to `len` columns by repeating the last one.
Var pad_replicate(Graph& g, Var x, std::size_t len);
/// Keeps the first `len` columns.
Var crop_columns(Graph& g, Var x, std::size_t len);

Var sum(Graph& g, Var x);
Var sum_squares(Graph& g, Var x);

/// -(1/T) sum_t log max(p[y_t, t], clamp) for class-major probabilities.
Var cross_entropy(Graph& g, Var probs, std::span<const int> labels, double clamp = 1e-12);

/// (1/T) sum_{t>=1} sum_k min(|log p[k,t] - log p[k,t-1]|, eps_max)^2.
Var transition_loss(Graph& g, Var probs, double eps_max, double clamp = 1e-12);

}  // namespace c2f::ops

namespace c2f {

/// a.b / (|a||b|); throws on a zero-norm argument.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace c2f
