#include "c2f/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace c2f::ops {

namespace {

void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) {
    throw ShapeError(std::string(op) + " expects a [C x T] tensor, got " + t.shape_string());
  }
}

// y[0..n) += a * x[0..n)
inline void axpy(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

inline double dot(std::size_t n, const double* x, const double* y) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

// Source position of target column j for linear align-corners upsampling.
struct LinearTap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

LinearTap linear_tap(std::size_t j, std::size_t src_len, std::size_t dst_len) {
  if (dst_len == 1 || src_len == 1) return {0, 0, 0.0};
  const std::size_t num = j * (src_len - 1);
  const std::size_t den = dst_len - 1;
  const std::size_t lo = num / den;
  const double frac = static_cast<double>(num % den) / static_cast<double>(den);
  return {lo, std::min(lo + 1, src_len - 1), frac};
}

}  // namespace

Var conv1d(Graph& g, Var x, Var weight, Var bias, std::size_t pad) {
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(weight);
  require_2d(xv, "conv1d");
  if (wv.ndim() != 3 || wv.dim(1) != xv.dim(0)) {
    throw ShapeError("conv1d weight " + wv.shape_string() + " incompatible with input " + xv.shape_string());
  }
  const std::size_t cin = xv.dim(0), len = xv.dim(1), cout = wv.dim(0), k = wv.dim(2);
  if (k % 2 == 0 || 2 * pad + 1 != k) {
    throw ShapeError("conv1d requires an odd kernel with pad=(k-1)/2");
  }
  const bool has_bias = bias.valid();
  if (has_bias && (g.value(bias).size() != cout)) {
    throw ShapeError("conv1d bias must have " + std::to_string(cout) + " entries");
  }

  Tensor out({cout, len});
  const double* xp = xv.data().data();
  const double* wp = wv.data().data();
  for (std::size_t o = 0; o < cout; ++o) {
    double* op = out.data().data() + o * len;
    if (has_bias) std::fill(op, op + len, g.value(bias)[o]);
    for (std::size_t i = 0; i < cin; ++i) {
      const double* xi = xp + i * len;
      for (std::size_t j = 0; j < k; ++j) {
        const double wij = wp[(o * cin + i) * k + j];
        if (wij == 0.0) continue;
        const long off = static_cast<long>(j) - static_cast<long>(pad);
        const std::size_t t0 = off < 0 ? static_cast<std::size_t>(-off) : 0;
        const std::size_t t1 = off > 0 ? (len > static_cast<std::size_t>(off) ? len - off : 0) : len;
        if (t1 <= t0) continue;
        axpy(t1 - t0, wij, xi + t0 + off, op + t0);
      }
    }
  }

  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return g.record(std::move(out), inputs,
      [x, weight, bias, has_bias, cin, cout, len, k, pad](Graph& gr, const Tensor& /*out*/, const Tensor& gout) {
        const double* xp = gr.value(x).data().data();
        const double* wp = gr.value(weight).data().data();
        const double* gp = gout.data().data();
        Tensor* gx = gr.grad_buffer(x);
        Tensor* gw = gr.grad_buffer(weight);
        for (std::size_t o = 0; o < cout; ++o) {
          const double* go = gp + o * len;
          for (std::size_t i = 0; i < cin; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
              const long off = static_cast<long>(j) - static_cast<long>(pad);
              const std::size_t t0 = off < 0 ? static_cast<std::size_t>(-off) : 0;
              const std::size_t t1 = off > 0 ? (len > static_cast<std::size_t>(off) ? len - off : 0) : len;
              if (t1 <= t0) continue;
              const std::size_t widx = (o * cin + i) * k + j;
              if (gx) axpy(t1 - t0, wp[widx], go + t0, gx->data().data() + i * len + t0 + off);
              if (gw) gw->data()[widx] += dot(t1 - t0, go + t0, xp + i * len + t0 + off);
            }
          }
        }
        if (has_bias) {
          if (Tensor* gb = gr.grad_buffer(bias)) {
            for (std::size_t o = 0; o < cout; ++o) {
              (*gb)[o] += std::accumulate(gp + o * len, gp + (o + 1) * len, 0.0);
            }
          }
        }
      },
      "conv1d");
}

Var maxpool1d(Graph& g, Var x, std::size_t window, PoolRounding rounding) {
  const Tensor& xv = g.value(x);
  require_2d(xv, "maxpool1d");
  const std::size_t c = xv.dim(0), len = xv.dim(1);
  if (window == 0) throw ShapeError("maxpool1d window must be >= 1");
  if (len == 0) throw ShapeError("maxpool1d on an empty sequence");
  const std::size_t out_len = rounding == PoolRounding::ceil
                                  ? (len + window - 1) / window
                                  : std::max<std::size_t>(1, len / window);
  Tensor out({c, out_len});
  std::vector<std::size_t> argmax(c * out_len);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* row = xv.data().data() + ch * len;
    for (std::size_t s = 0; s < out_len; ++s) {
      const std::size_t b = s * window;
      const std::size_t e = std::min(b + window, len);
      std::size_t best = b;
      for (std::size_t t = b + 1; t < e; ++t) {
        if (row[t] > row[best]) best = t;
      }
      out(ch, s) = row[best];
      argmax[ch * out_len + s] = best;
    }
  }
  return g.record(std::move(out), {x},
      [x, c, len, out_len, argmax = std::move(argmax)](Graph& gr, const Tensor& /*out*/, const Tensor& gout) {
        Tensor* gx = gr.grad_buffer(x);
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t s = 0; s < out_len; ++s) {
            (*gx)[ch * len + argmax[ch * out_len + s]] += gout(ch, s);
          }
        }
      },
      "maxpool1d");
}

Var max_over_time(Graph& g, Var x) {
  const std::size_t len = g.value(x).dim(1);
  return maxpool1d(g, x, len, PoolRounding::ceil);
}

Var upsample1d(Graph& g, Var x, std::size_t target_len, UpsampleMode mode) {
  const Tensor& xv = g.value(x);
  require_2d(xv, "upsample1d");
  const std::size_t c = xv.dim(0), len = xv.dim(1);
  if (len == 0 || target_len == 0) throw ShapeError("upsample1d needs non-empty source and target");
  Tensor out({c, target_len});
  if (mode == UpsampleMode::nearest) {
    for (std::size_t j = 0; j < target_len; ++j) {
      const std::size_t src = j * len / target_len;
      for (std::size_t ch = 0; ch < c; ++ch) out(ch, j) = xv(ch, src);
    }
  } else {
    for (std::size_t j = 0; j < target_len; ++j) {
      const auto tap = linear_tap(j, len, target_len);
      for (std::size_t ch = 0; ch < c; ++ch) {
        out(ch, j) = (1.0 - tap.frac) * xv(ch, tap.lo) + tap.frac * xv(ch, tap.hi);
      }
    }
  }
  return g.record(std::move(out), {x},
      [x, c, len, target_len, mode](Graph& gr, const Tensor& /*out*/, const Tensor& gout) {
        Tensor* gx = gr.grad_buffer(x);
        for (std::size_t j = 0; j < target_len; ++j) {
          if (mode == UpsampleMode::nearest) {
            const std::size_t src = j * len / target_len;
            for (std::size_t ch = 0; ch < c; ++ch) (*gx)(ch, src) += gout(ch, j);
          } else {
            const auto tap = linear_tap(j, len, target_len);
            for (std::size_t ch = 0; ch < c; ++ch) {
              (*gx)(ch, tap.lo) += (1.0 - tap.frac) * gout(ch, j);
              (*gx)(ch, tap.hi) += tap.frac * gout(ch, j);
            }
          }
        }
      },
      "upsample1d");
}

Var batchnorm1d(Graph& g, Var x, Var gamma, Var beta, NormStats& stats, NormMode mode) {
  const Tensor& xv = g.value(x);
  require_2d(xv, "batchnorm1d");
  const std::size_t c = xv.dim(0), len = xv.dim(1);
  if (len == 0) throw ShapeError("batchnorm1d on an empty sequence");
  const Tensor& gv = g.value(gamma);
  const Tensor& bv = g.value(beta);
  if (gv.size() != c || bv.size() != c || stats.running_mean.size() != c) {
    throw ShapeError("batchnorm1d parameters do not match " + std::to_string(c) + " channels");
  }

  Tensor xhat({c, len});
  std::vector<double> inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const auto row = xv.row(ch);
    double mean, var;
    if (mode != NormMode::eval) {
      mean = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(len);
      double ss = 0.0;
      for (double v : row) ss += (v - mean) * (v - mean);
      var = ss / static_cast<double>(len);
      if (mode == NormMode::train) {
        const double unbiased = len > 1 ? ss / static_cast<double>(len - 1) : var;
        stats.running_mean[ch] = (1.0 - stats.momentum) * stats.running_mean[ch] + stats.momentum * mean;
        stats.running_var[ch] = (1.0 - stats.momentum) * stats.running_var[ch] + stats.momentum * unbiased;
      }
    } else {
      mean = stats.running_mean[ch];
      var = stats.running_var[ch];
    }
    inv_std[ch] = 1.0 / std::sqrt(var + stats.eps);
    for (std::size_t t = 0; t < len; ++t) xhat(ch, t) = (row[t] - mean) * inv_std[ch];
  }
  Tensor out({c, len});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t t = 0; t < len; ++t) out(ch, t) = gv[ch] * xhat(ch, t) + bv[ch];
  }
  return g.record(std::move(out), {x, gamma, beta},
      [x, gamma, beta, c, len, mode, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Graph& gr, const Tensor& /*out*/, const Tensor& gout) {
        const Tensor& gv = gr.value(gamma);
        Tensor* gx = gr.grad_buffer(x);
        Tensor* gg = gr.grad_buffer(gamma);
        Tensor* gb = gr.grad_buffer(beta);
        const double n = static_cast<double>(len);
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t t = 0; t < len; ++t) {
            sum_g += gout(ch, t);
            sum_gx += gout(ch, t) * xhat(ch, t);
          }
          if (gg) (*gg)[ch] += sum_gx;
          if (gb) (*gb)[ch] += sum_g;
          if (!gx) continue;
          const double k = gv[ch] * inv_std[ch];
          if (mode != NormMode::eval) {
            for (std::size_t t = 0; t < len; ++t) {
              (*gx)(ch, t) += k * (gout(ch, t) - sum_g / n - xhat(ch, t) * sum_gx / n);
            }
          } else {
            for (std::size_t t = 0; t < len; ++t) (*gx)(ch, t) += k * gout(ch, t);
          }
        }
      },
      "batchnorm1d");
}

Var relu(Graph& g, Var x) {
  Tensor out = g.value(x);
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return g.record(std::move(out), {x},
      [x](Graph& gr, const Tensor& /*out*/, const Tensor& gout) {
        const Tensor& xv = gr.value(x);
        Tensor* gx = gr.grad_buffer(x);
        for (std::size_t i = 0; i < xv.size(); ++i) {
          if (xv[i] > 0.0) (*gx)[i] += gout[i];
        }
      },
      "relu");
}

Var softmax(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  require_2d(xv, "softmax");
  const std::size_t c = xv.dim(0), len = xv.dim(1);
  if (c == 0) throw ShapeError("softmax over an empty class axis");
  Tensor out({c, len});
  for (std::size_t t = 0; t < len; ++t) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < c; ++k) mx = std::max(mx, xv(k, t));
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      out(k, t) = std::exp(xv(k, t) - mx);
      z += out(k, t);
    }
    for (std::size_t k = 0; k < c; ++k) out(k, t) /= z;
  }
  return g.record(std::move(out), {x},
      [x, c, len](Graph& gr, const Tensor& p, const Tensor& gout) {
        Tensor* gx = gr.grad_buffer(x);
        for (std::size_t t = 0; t < len; ++t) {
          double s = 0.0;
          for (std::size_t k = 0; k < c; ++k) s += p(k, t) * gout(k, t);
          for (std::size_t k = 0; k < c; ++k) (*gx)(k, t) += p(k, t) * (gout(k, t) - s);
        }
      },
      "softmax");
}

Var concat_channels(Graph& g, std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const std::size_t len = g.value(parts[0]).dim(1);
  std::size_t total = 0;
  for (Var p : parts) {
    const Tensor& v = g.value(p);
    require_2d(v, "concat_channels");
    if (v.dim(1) != len) throw ShapeError("concat length mismatch");
    total += v.dim(0);
  }
  Tensor out({total, len});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& v = g.value(p);
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + off * len);
    offsets.push_back(off);
    off += v.dim(0);
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return g.record(std::move(out), inputs,
      [inputs, offsets, len](Graph& gr, const Tensor& /*out*/, const Tensor& gout) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          Tensor* gp = gr.grad_buffer(inputs[i]);
          if (!gp) continue;
          const double* src = gout.data().data() + offsets[i] * len;
          for (std::size_t j = 0; j < gp->size(); ++j) (*gp)[j] += src[j];
        }
      },
      "concat_channels");
}

Var concat_time(Graph& g, std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const std::size_t rows = g.value(parts[0]).dim(0);
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (Var p : parts) {
    const Tensor& v = g.value(p);
    require_2d(v, "concat_time");
    if (v.dim(0) != rows) throw ShapeError("concat_time channel mismatch");
    offsets.push_back(total);
    total += v.dim(1);
  }
  Tensor out({rows, total});
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& v = g.value(parts[i]);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offsets[i]));
    }
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return g.record(std::move(out), inputs,
      [inputs, offsets](Graph& gr, const Tensor& /*out*/, const Tensor& gout) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          Tensor* gp = gr.grad_buffer(inputs[i]);
          if (!gp) continue;
          const std::size_t len = gp->dim(1);
          for (std::size_t r = 0; r < gp->dim(0); ++r) {
            for (std::size_t t = 0; t < len; ++t) (*gp)(r, t) += gout(r, offsets[i] + t);
          }
        }
      },
      "concat_time");
}

Var add(Graph& g, Var a, Var b) {
  if (!g.value(a).same_shape(g.value(b))) throw ShapeError("add shape mismatch");
  Tensor out = g.value(a);
  const Tensor& bv = g.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return g.record(std::move(out), {a, b},
      [a, b](Graph& gr, const Tensor& /*out*/, const Tensor& gout) {
        for (Var v : {a, b}) {
          if (Tensor* gv = gr.grad_buffer(v)) {
            for (std::size_t i = 0; i < gv->size(); ++i) (*gv)[i] += gout[i];
          }
        }
      },
      "add");
}

Var mul(Graph& g, Var a, Var b) {
  if (!g.value(a).same_shape(g.value(b))) throw ShapeError("mul shape mismatch");
  Tensor out = g.value(a);
  const Tensor& bv = g.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return g.record(std::move(out), {a, b},
      [a, b](Graph& gr, const Tensor& /*out*/, const Tensor& gout) {
        const Tensor& av = gr.value(a);
        const Tensor& bv = gr.value(b);
        if (Tensor* ga = gr.grad_buffer(a)) {
          for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += gout[i] * bv[i];
        }
        if (Tensor* gb = gr.grad_buffer(b)) {
          for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += gout[i] * av[i];
        }
      },
      "mul");
}

Var scale(Graph& g, Var x, double s) {
  Tensor out = g.value(x);
  for (auto& v : out.data()) v *= s;
  return g.record(std::move(out), {x},
      [x, s](Graph& gr, const Tensor& /*out*/, const Tensor& gout) {
        Tensor* gx = gr.grad_buffer(x);
        for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += s * gout[i];
      },
      "scale");
}

Var weighted_sum(Graph& g, std::span<const Var> parts, std::span<const double> weights) {
  Tensor w({weights.size(), 1}, std::vector<double>(weights.begin(), weights.end()));
  return weighted_sum(g, parts, g.constant(std::move(w)));
}

Var weighted_sum(Graph& g, std::span<const Var> parts, Var weights) {
  const Tensor& wv = g.value(weights);
  if (parts.empty() || wv.size() != parts.size()) {
    throw ShapeError("weighted_sum needs one weight per part");
  }
  Tensor out = Tensor::zeros_like(g.value(parts[0]));
  for (std::size_t u = 0; u < parts.size(); ++u) {
    const Tensor& pv = g.value(parts[u]);
    if (!pv.same_shape(out)) throw ShapeError("weighted_sum parts differ in shape");
    axpy(out.size(), wv[u], pv.data().data(), out.data().data());
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  inputs.push_back(weights);
  return g.record(std::move(out), inputs,
      [inputs](Graph& gr, const Tensor& /*out*/, const Tensor& gout) {
        const std::size_t n = inputs.size() - 1;
        const Var weights = inputs.back();
        const Tensor& wv = gr.value(weights);
        Tensor* gw = gr.grad_buffer(weights);
        for (std::size_t u = 0; u < n; ++u) {
          if (Tensor* gp = gr.grad_buffer(inputs[u])) axpy(gout.size(), wv[u], gout.data().data(), gp->data().data());
          if (gw) (*gw)[u] += dot(gout.size(), gout.data().data(), gr.value(inputs[u]).data().data());
        }
      },
      "weighted_sum");
}

namespace {
constexpr double kNormFloor = 1e-12;
}  // namespace

Var l2_normalize_columns(Graph& g, Var x, bool allow_zero) {
  const Tensor& xv = g.value(x);
  require_2d(xv, "l2_normalize_columns");
  const std::size_t c = xv.dim(0), len = xv.dim(1);
  Tensor out({c, len});
  std::vector<double> norms(len);
  for (std::size_t t = 0; t < len; ++t) {
    double ss = 0.0;
    for (std::size_t k = 0; k < c; ++k) ss += xv(k, t) * xv(k, t);
    if (ss == 0.0 && !allow_zero) throw NumericError("zero-norm feature column " + std::to_string(t));
    norms[t] = std::max(std::sqrt(ss), kNormFloor);
    for (std::size_t k = 0; k < c; ++k) out(k, t) = xv(k, t) / norms[t];
  }
  return g.record(std::move(out), {x},
      [x, c, len, norms = std::move(norms)](Graph& gr, const Tensor& yv, const Tensor& gout) {
        Tensor* gx = gr.grad_buffer(x);
        for (std::size_t t = 0; t < len; ++t) {
          double s = 0.0;
          if (norms[t] > kNormFloor) {
            for (std::size_t k = 0; k < c; ++k) s += yv(k, t) * gout(k, t);
          }
          for (std::size_t k = 0; k < c; ++k) (*gx)(k, t) += (gout(k, t) - yv(k, t) * s) / norms[t];
        }
      },
      "l2_normalize");
}

Var gather_columns(Graph& g, Var x, std::span<const std::size_t> columns) {
  const Tensor& xv = g.value(x);
  require_2d(xv, "gather_columns");
  const std::size_t c = xv.dim(0), len = xv.dim(1);
  Tensor out({c, columns.size()});
  for (std::size_t s = 0; s < columns.size(); ++s) {
    if (columns[s] >= len) throw ShapeError("gather column out of range");
    for (std::size_t k = 0; k < c; ++k) out(k, s) = xv(k, columns[s]);
  }
  std::vector<std::size_t> cols(columns.begin(), columns.end());
  return g.record(std::move(out), {x},
      [x, c, cols = std::move(cols)](Graph& gr, const Tensor& /*out*/, const Tensor& gout) {
        Tensor* gx = gr.grad_buffer(x);
        for (std::size_t s = 0; s < cols.size(); ++s) {
          for (std::size_t k = 0; k < c; ++k) (*gx)(k, cols[s]) += gout(k, s);
        }
      },
      "gather_columns");
}

Var pad_replicate(Graph& g, Var x, std::size_t len) {
  const std::size_t cur = g.value(x).dim(1);
  if (len <= cur) return x;
  std::vector<std::size_t> cols(len);
  for (std::size_t t = 0; t < len; ++t) cols[t] = std::min(t, cur - 1);
  return gather_columns(g, x, cols);
}

Var crop_columns(Graph& g, Var x, std::size_t len) {
  const std::size_t cur = g.value(x).dim(1);
  if (len >= cur) return x;
  std::vector<std::size_t> cols(len);
  std::iota(cols.begin(), cols.end(), std::size_t{0});
  return gather_columns(g, x, cols);
}

Var sum(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  const double s = std::accumulate(xv.data().begin(), xv.data().end(), 0.0);
  return g.record(Tensor({1}, {s}), {x},
      [x](Graph& gr, const Tensor& /*out*/, const Tensor& gout) {
        Tensor* gx = gr.grad_buffer(x);
        for (auto& v : gx->data()) v += gout[0];
      },
      "sum");
}

Var sum_squares(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  double s = 0.0;
  for (double v : xv.data()) s += v * v;
  return g.record(Tensor({1}, {s}), {x},
      [x](Graph& gr, const Tensor& /*out*/, const Tensor& gout) {
        const Tensor& xv = gr.value(x);
        Tensor* gx = gr.grad_buffer(x);
        for (std::size_t i = 0; i < xv.size(); ++i) (*gx)[i] += 2.0 * xv[i] * gout[0];
      },
      "sum_squares");
}

Var cross_entropy(Graph& g, Var probs, std::span<const int> labels, double clamp) {
  const Tensor& p = g.value(probs);
  require_2d(p, "cross_entropy");
  const std::size_t c = p.dim(0), len = p.dim(1);
  if (labels.size() != len) throw ShapeError("cross_entropy label count does not match frames");
  if (len == 0) throw ShapeError("cross_entropy on zero frames");
  double loss = 0.0;
  for (std::size_t t = 0; t < len; ++t) {
    if (labels[t] < 0 || static_cast<std::size_t>(labels[t]) >= c) {
      throw std::out_of_range("label " + std::to_string(labels[t]) + " outside [0," + std::to_string(c) + ")");
    }
    loss -= std::log(std::max(p(labels[t], t), clamp));
  }
  loss /= static_cast<double>(len);
  std::vector<int> y(labels.begin(), labels.end());
  return g.record(Tensor({1}, {loss}), {probs},
      [probs, y = std::move(y), len, clamp](Graph& gr, const Tensor& /*out*/, const Tensor& gout) {
        const Tensor& p = gr.value(probs);
        Tensor* gp = gr.grad_buffer(probs);
        for (std::size_t t = 0; t < len; ++t) {
          const double v = p(y[t], t);
          if (v > clamp) (*gp)(y[t], t) -= gout[0] / (static_cast<double>(len) * v);
        }
      },
      "cross_entropy");
}

Var transition_loss(Graph& g, Var probs, double eps_max, double clamp) {
  const Tensor& p = g.value(probs);
  require_2d(p, "transition_loss");
  const std::size_t c = p.dim(0), len = p.dim(1);
  if (len < 2) throw ShapeError("transition_loss needs at least two frames");
  auto logp = [clamp](double v) { return std::log(std::max(v, clamp)); };
  double loss = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t t = 1; t < len; ++t) {
      const double d = std::min(std::abs(logp(p(k, t)) - logp(p(k, t - 1))), eps_max);
      loss += d * d;
    }
  }
  loss /= static_cast<double>(len);
  return g.record(Tensor({1}, {loss}), {probs},
      [probs, c, len, eps_max, clamp, logp](Graph& gr, const Tensor& /*out*/, const Tensor& gout) {
        const Tensor& p = gr.value(probs);
        Tensor* gp = gr.grad_buffer(probs);
        const double scale = gout[0] / static_cast<double>(len);
        for (std::size_t k = 0; k < c; ++k) {
          for (std::size_t t = 1; t < len; ++t) {
            const double d = logp(p(k, t)) - logp(p(k, t - 1));
            if (std::abs(d) >= eps_max) continue;
            const double coef = 2.0 * d * scale;
            if (p(k, t) > clamp) (*gp)(k, t) += coef / p(k, t);
            if (p(k, t - 1) > clamp) (*gp)(k, t - 1) -= coef / p(k, t - 1);
          }
        }
      },
      "transition_loss");
}

}  // namespace c2f::ops

namespace c2f {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw NumericError("cosine_similarity of a zero-norm vector");
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

}  // namespace c2f
