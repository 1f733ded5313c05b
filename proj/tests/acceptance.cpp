// Acceptance checks. Prints one PASS/FAIL line per criterion; tolerances and
// budgets are pinned below. Exit status is 0 once every selected criterion
// has been reported, unless --strict is given (then any FAIL exits 1).
//
//   acceptance [--only 1,2,...] [--strict] [--cli PATH] [--workdir DIR]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>

#include "c2f/contrastive.hpp"
#include "c2f/ensemble.hpp"
#include "c2f/icc.hpp"
#include "c2f/profiles.hpp"
#include "c2f/supervised.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace c2f;
using c2f::testing::gradcheck;
using c2f::testing::project;
using c2f::testing::random_tensor;

namespace {

// Tolerances and budgets.
constexpr double kOpGradTol = 1e-4;
constexpr double kModelGradTol = 1e-3;
constexpr double kGradBudgetSec = 60.0;
constexpr double kIdentityTol = 1e-9;
constexpr double kMetricTol = 1e-9;
constexpr double kPiTol = 0.01;
constexpr double kEntropyTol = 1e-9;
constexpr double kSupervisedMoF = 90.0;
constexpr std::size_t kSupervisedEpochs = 200;
constexpr double kSupervisedBudgetSec = 600.0;
constexpr double kLinearGain = 5.0;
constexpr double kICCGain = 2.0;
constexpr double kICCSlack = 0.5;
constexpr double kICCBudgetSec = 1800.0;

// Reference synthetic set and the reduced-width model trained on it.
constexpr std::uint64_t kSeed = 0;
constexpr std::size_t kWidth = 32;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Options {
  std::string cli;
  fs::path workdir;
};

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

const DatasetProfile& reference_profile() { return profile("synthetic"); }

const Dataset& reference_data() {
  static const Dataset data = [] {
    SyntheticConfig sc;
    sc.seed = kSeed;
    return generate_synthetic(sc);
  }();
  return data;
}

ModelConfig reference_model(const Dataset& d) {
  return ModelConfig::uniform(d.feature_dim(), d.num_classes(), 6, kWidth);
}

AugmentConfig reference_augment() {
  AugmentConfig a;
  a.w0 = reference_profile().w0;
  return a;
}

// ------------------------------------------------------------------ 1

Outcome gradient_correctness(const Options&) {
  Stopwatch clock;
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> small(1, 4), len(3, 9);
  double worst_op = 0.0;
  auto track = [&](double e) { worst_op = std::max(worst_op, e); };
  for (int shape = 0; shape < 10; ++shape) {
    const std::size_t C = small(rng), D = small(rng), T = len(rng);
    const std::size_t k = 2 * small(rng) - 1;
    track(gradcheck([&](Graph& g, const std::vector<Var>& v) { return project(g, ops::conv1d(g, v[0], v[1], v[2], (k - 1) / 2)); },
                    {random_tensor({C, T}, rng), random_tensor({D, C, k}, rng), random_tensor({D}, rng)}));
    const std::size_t w = small(rng);
    for (auto rounding : {ops::PoolRounding::ceil, ops::PoolRounding::floor_min1}) {
      track(gradcheck([&](Graph& g, const std::vector<Var>& v) { return project(g, ops::maxpool1d(g, v[0], w, rounding)); },
                      {random_tensor({C, T}, rng)}));
    }
    for (auto mode : {ops::UpsampleMode::linear, ops::UpsampleMode::nearest}) {
      const std::size_t L = len(rng) + 3;
      track(gradcheck([&](Graph& g, const std::vector<Var>& v) { return project(g, ops::upsample1d(g, v[0], L, mode)); },
                      {random_tensor({C, T}, rng)}));
    }
    for (auto mode : {ops::NormMode::train, ops::NormMode::sample}) {
      track(gradcheck(
          [&](Graph& g, const std::vector<Var>& v) {
            ops::NormStats stats(C);
            return project(g, ops::batchnorm1d(g, v[0], v[1], v[2], stats, mode));
          },
          {random_tensor({C, T}, rng), random_tensor({C}, rng), random_tensor({C}, rng)}));
    }
    track(gradcheck([&](Graph& g, const std::vector<Var>& v) { return project(g, ops::relu(g, v[0])); },
                    {random_tensor({C, T}, rng)}));
    track(gradcheck([&](Graph& g, const std::vector<Var>& v) { return project(g, ops::softmax(g, v[0])); },
                    {random_tensor({C, T}, rng, -3, 3)}));
    track(gradcheck(
        [&](Graph& g, const std::vector<Var>& v) {
          std::vector<Var> parts{v[0], v[1]};
          return project(g, ops::concat_channels(g, parts));
        },
        {random_tensor({C, T}, rng), random_tensor({D, T}, rng)}));
    track(gradcheck(
        [&](Graph& g, const std::vector<Var>& v) {
          std::vector<Var> parts{v[0], v[1]};
          return project(g, ops::concat_time(g, parts));
        },
        {random_tensor({C, T}, rng), random_tensor({C, D}, rng)}));
    track(gradcheck([&](Graph& g, const std::vector<Var>& v) { return project(g, ops::add(g, v[0], v[1])); },
                    {random_tensor({C, T}, rng), random_tensor({C, T}, rng)}));
    track(gradcheck([&](Graph& g, const std::vector<Var>& v) { return project(g, ops::mul(g, v[0], v[1])); },
                    {random_tensor({C, T}, rng), random_tensor({C, T}, rng)}));
    track(gradcheck([&](Graph& g, const std::vector<Var>& v) { return project(g, ops::scale(g, v[0], 0.7)); },
                    {random_tensor({C, T}, rng)}));
    track(gradcheck([&](Graph& g, const std::vector<Var>& v) { return project(g, ops::l2_normalize_columns(g, v[0])); },
                    {random_tensor({C + 1, T}, rng, 0.5, 2.0)}));
    track(gradcheck(
        [&](Graph& g, const std::vector<Var>& v) {
          std::vector<Var> parts{v[0], v[1]};
          return project(g, ops::weighted_sum(g, parts, v[2]));
        },
        {random_tensor({C, T}, rng), random_tensor({C, T}, rng), random_tensor({2, 1}, rng)}));
    const std::vector<std::size_t> cols{T - 1, 0, T / 2};
    track(gradcheck([&](Graph& g, const std::vector<Var>& v) { return project(g, ops::gather_columns(g, v[0], cols)); },
                    {random_tensor({C, T}, rng)}));
    track(gradcheck([&](Graph& g, const std::vector<Var>& v) { return project(g, ops::max_over_time(g, v[0])); },
                    {random_tensor({C, T}, rng)}));
    track(gradcheck([&](Graph& g, const std::vector<Var>& v) { return project(g, ops::pad_replicate(g, v[0], T + 4)); },
                    {random_tensor({C, T}, rng)}));
    track(gradcheck([&](Graph& g, const std::vector<Var>& v) { return project(g, ops::crop_columns(g, v[0], T - 1)); },
                    {random_tensor({C, T}, rng)}));
    track(gradcheck([&](Graph& g, const std::vector<Var>& v) { return ops::sum_squares(g, v[0]); },
                    {random_tensor({C, T}, rng)}));

    std::vector<int> labels(T);
    const std::size_t classes = C + 1;
    for (auto& y : labels) y = static_cast<int>(rng() % classes);
    track(gradcheck([&](Graph& g, const std::vector<Var>& v) { return ops::cross_entropy(g, ops::softmax(g, v[0]), labels); },
                    {random_tensor({classes, T}, rng, -2, 2)}));
    track(gradcheck([&](Graph& g, const std::vector<Var>& v) { return ops::transition_loss(g, ops::softmax(g, v[0]), 4.0); },
                    {random_tensor({classes, T}, rng, -2, 2)}));

    // Contrastive loss on unit-free features with a fixed set structure.
    std::vector<SampleMeta> meta(6);
    for (std::size_t i = 0; i < meta.size(); ++i) meta[i] = {i % 2, 0.01 * static_cast<double>(i), static_cast<int>(i % 3), 0};
    const auto sets = build_sets(meta, 0.1, false);
    if (sets.positive_count() > 0) {
      track(gradcheck([&](Graph& g, const std::vector<Var>& v) { return set_contrastive_loss(g, v[0], sets, 0.5); },
                      {random_tensor({D + 1, meta.size()}, rng, 0.2, 1.5)}));
    }
  }

  // Composed depth-2 model: CE + transition loss on the ensemble w.r.t. every parameter tensor.
  double worst_model = 0.0;
  for (int shape = 0; shape < 10; ++shape) {
    const std::size_t F = 2 + rng() % 4, C = 2 + rng() % 3, T = 6 + rng() % 14, width = 3 + rng() % 4;
    auto cfg = ModelConfig::uniform(F, C, 2, width);
    cfg.tpp_windows = {2, 3};
    Model m(cfg, 100 + static_cast<std::uint64_t>(shape));
    const Tensor V = random_tensor({T, F}, rng);
    std::vector<int> y(T);
    for (std::size_t t = 0; t < T; ++t) y[t] = static_cast<int>((t * C) / T);
    LossConfig lc;
    auto loss = [&](Graph& g) {
      auto out = m.forward(g, V, ops::NormMode::train);
      return joint_loss(g, c2f_ensemble(g, out.probs, m.heads().ensemble_weights(g)), y, lc).total;
    };
    for (auto* p : m.parameters()) p->zero_grad();
    {
      Graph g;
      g.backward(loss(g));
    }
    auto value = [&] {
      Graph g;
      return g.value(loss(g))[0];
    };
    std::vector<double> analytic, numeric;
    for (auto* p : m.parameters()) {
      for (int r = 0; r < 4; ++r) {
        const std::size_t j = rng() % p->value.size();
        const double orig = p->value[j];
        p->value[j] = orig + 1e-5;
        const double up = value();
        p->value[j] = orig - 1e-5;
        const double down = value();
        p->value[j] = orig;
        analytic.push_back(p->grad[j]);
        numeric.push_back((up - down) / 2e-5);
      }
    }
    worst_model = std::max(worst_model, c2f::testing::relative_error(analytic, numeric, 1e-6));
  }
  const double secs = clock.seconds();
  return {worst_op < kOpGradTol && worst_model < kModelGradTol && secs < kGradBudgetSec,
          fmt("worst op rel err %.2e (< %.0e), composed depth-2 %.2e (< %.0e), %.1f s (< %.0f s)", worst_op, kOpGradTol,
              worst_model, kModelGradTol, secs, kGradBudgetSec)};
}

// ------------------------------------------------------------------ 2, 3

double column_cos(const Tensor& x, std::size_t a, std::size_t b, std::size_t row0, std::size_t rows) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t r = row0; r < row0 + rows; ++r) {
    dot += x(r, a) * x(r, b);
    na += x(r, a) * x(r, a);
    nb += x(r, b) * x(r, b);
  }
  return dot / std::sqrt(na * nb);
}

Tensor multires(const std::vector<Tensor>& z, std::size_t T, ops::UpsampleMode mode) {
  Graph g;
  std::vector<Var> vars;
  for (const auto& t : z) vars.push_back(g.constant(t));
  return g.value(multires_feature(g, vars, T, mode));
}

Outcome cosine_identity(const Options&) {
  Rng rng = make_stream(2, "identity");
  std::uniform_int_distribution<std::size_t> depth_d(2, 6), width_d(2, 8);
  double worst = 0.0;
  std::size_t instances = 0;
  for (auto mode : {ops::UpsampleMode::linear, ops::UpsampleMode::nearest}) {
    for (int inst = 0; inst < 100; ++inst) {
      const std::size_t depth = depth_d(rng), width = width_d(rng);
      const std::size_t T = (std::size_t{1} << depth) + rng() % 40;
      std::vector<Tensor> z;
      for (std::size_t u = 1; u <= depth; ++u) {
        const std::size_t len = (T + (std::size_t{1} << (depth - u)) - 1) >> (depth - u);
        z.push_back(random_tensor({width, len}, rng));
      }
      const Tensor f = multires(z, T, mode);
      const std::size_t a = rng() % T, b = rng() % T;
      double mean = 0.0;
      for (std::size_t u = 0; u < depth; ++u) mean += column_cos(f, a, b, width * u, width);
      mean /= static_cast<double>(depth);
      worst = std::max(worst, std::abs(column_cos(f, a, b, 0, f.dim(0)) - mean));
      ++instances;
    }
  }
  return {worst < kIdentityTol, fmt("%zu instances, max |cos(f) - mean cos(z_u)| = %.2e (< %.0e)", instances, worst,
                                    kIdentityTol)};
}

Outcome continuity_bound(const Options&) {
  Rng rng = make_stream(3, "continuity");
  const std::size_t T = 64, depth = 6;
  std::size_t pairs = 0, violations = 0;
  for (int inst = 0; inst < 5; ++inst) {
    std::vector<Tensor> z;
    for (std::size_t u = 1; u <= depth; ++u) z.push_back(random_tensor({4, T >> (depth - u)}, rng));
    const Tensor f = multires(z, T, ops::UpsampleMode::nearest);
    for (std::size_t u = 1; u <= 5; ++u) {
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t s = 0; s < T; ++s) {
          if ((t >> u) != (s >> u)) continue;
          ++pairs;
          if (column_cos(f, t, s, 0, f.dim(0)) < 1.0 - static_cast<double>(u) / 3.0 - 1e-12) ++violations;
        }
      }
    }
  }
  return {violations == 0 && pairs > 0, fmt("%zu frame pairs sharing a 2^u block, u = 1..5: %zu violations", pairs,
                                            violations)};
}

// ------------------------------------------------------------------ 4

std::vector<int> random_runs(std::size_t T, int C, Rng& rng) {
  std::uniform_int_distribution<int> label(0, C - 1);
  std::uniform_int_distribution<std::size_t> len(1, 8);
  std::vector<int> y;
  while (y.size() < T) {
    const int l = label(rng);
    for (std::size_t n = len(rng); n > 0 && y.size() < T; --n) y.push_back(l);
  }
  return y;
}

Outcome metric_oracles(const Options&) {
  Rng rng = make_stream(4, "metrics");
  std::uniform_int_distribution<std::size_t> len(1, 50);
  std::uniform_int_distribution<int> classes(1, 5);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t T = len(rng);
    const int C = classes(rng);
    const auto gt = random_runs(T, C, rng);
    const auto pred = random_runs(T, C, rng);
    worst = std::max(worst, std::abs(mof(pred, gt) - oracle::mof(pred, gt)));
    worst = std::max(worst, std::abs(edit_score(pred, gt) - oracle::edit(pred, gt)));
    for (double k : kF1Thresholds) {
      worst = std::max(worst, std::abs(f1_at_k(pred, gt, k) - oracle::f1(oracle::f1_counts(pred, gt, k))));
    }
  }

  // Hand cases.
  std::vector<std::string> failed;
  const std::vector<int> gt4{0, 0, 1, 1};
  if (mof(std::vector<int>{0, 1, 1, 1}, gt4) != 75.0) failed.push_back("mof");
  const std::vector<int> abc{0, 0, 1, 1, 2, 2};
  if (std::abs(edit_score(std::vector<int>{0, 0, 0, 2, 2, 2}, abc) - 200.0 / 3.0) > kMetricTol) failed.push_back("edit");
  if (edit_score(std::vector<int>{0, 1, 1, 1, 1, 2}, abc) != 100.0) failed.push_back("edit-lengths");
  const std::vector<int> gt10(10, 0);
  std::vector<int> half(10, 0);
  for (std::size_t t = 5; t < 10; ++t) half[t] = 1;
  if (std::abs(f1_at_k(half, gt10, 0.25) - 200.0 / 3.0) > kMetricTol) failed.push_back("f1@25");
  if (f1_at_k(half, gt10, 0.50) != 0.0) failed.push_back("f1@50-strict");
  std::vector<int> gt16(16, 0);
  gt16[4] = gt16[5] = 1;
  const auto c = f1_counts(std::vector<int>(16, 0), gt16, 0.1);
  if (c.tp != 1 || c.fp != 0 || c.fn != 2) failed.push_back("f1-matching");
  SegmentationScorer pooled;
  pooled.add(std::vector<int>{0, 0, 1, 1}, gt4);
  pooled.add(std::vector<int>(6, 1), std::vector<int>(6, 0));
  const auto r = pooled.report();
  if (std::abs(r.mof - 40.0) > kMetricTol || std::abs(r.edit - 50.0) > kMetricTol ||
      std::abs(r.f1_50 - 200.0 / 3.0) > kMetricTol) {
    failed.push_back("scorer");
  }

  std::string failures;
  for (const auto& f : failed) failures += " " + f;
  return {worst < kMetricTol && failed.empty(),
          fmt("1000 random pairs: max |lib - oracle| = %.2e (< %.0e); hand cases failed:%s", worst, kMetricTol,
              failures.empty() ? " none" : failures.c_str())};
}

// ------------------------------------------------------------------ 5

Outcome augmentation_distribution(const Options&) {
  AugmentConfig cfg;
  cfg.w0 = 10;
  Rng rng = make_stream(5, "windows");
  std::map<std::size_t, std::size_t> hist;
  const std::size_t draws = 100000;
  for (std::size_t i = 0; i < draws; ++i) hist[sample_window(cfg, rng)]++;
  std::set<std::size_t> support;
  for (const auto& [w, n] : hist) support.insert(w);
  std::set<std::size_t> expected;
  for (std::size_t w = 5; w <= 20; ++w) expected.insert(w);
  const double p10 = static_cast<double>(hist[10]) / static_cast<double>(draws);

  Rng prng = make_stream(5, "pool");
  std::uniform_int_distribution<std::size_t> len(1, 60), width(1, 12), feat(1, 6);
  std::uniform_int_distribution<int> label(0, 4);
  std::size_t mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t T = len(prng);
    const std::size_t w = std::min(T, width(prng));
    const Tensor x = random_tensor({T, feat(prng)}, prng);
    const Tensor got = pool_features(x, w);
    const Tensor want = oracle::pool_max(x, w);
    bool same = got.shape() == want.shape();
    for (std::size_t j = 0; same && j < got.size(); ++j) same = got[j] == want[j];
    std::vector<int> y(T);
    for (auto& v : y) v = label(prng);
    if (!same || pool_labels(y, w) != oracle::pool_majority(y, w)) ++mismatches;
  }
  return {std::abs(p10 - 0.5) <= kPiTol && support == expected && mismatches == 0,
          fmt("P(w=10) = %.4f (0.5 +- %.2f), support %zu..%zu with %zu values (want 5..20, 16), pooling mismatches "
              "%zu/1000",
              p10, kPiTol, *support.begin(), *support.rbegin(), support.size(), mismatches)};
}

// ------------------------------------------------------------------ 6

Outcome set_oracle(const Options&) {
  Rng rng = make_stream(6, "sets");
  std::uniform_int_distribution<int> label(0, 3), act(0, 2);
  std::uniform_int_distribution<std::size_t> video(0, 3), size(10, 60);
  auto canon = [](const std::vector<std::vector<std::size_t>>& v) {
    std::vector<std::set<std::size_t>> out;
    for (const auto& s : v) out.emplace_back(s.begin(), s.end());
    return out;
  };
  std::size_t mismatches = 0, excluded = 0;
  const double delta = 0.03;
  for (int b = 0; b < 200; ++b) {
    std::vector<SampleMeta> s(size(rng));
    for (auto& m : s) m = {video(rng), uniform01(rng) * 0.2, label(rng), act(rng)};
    const bool use_activity = b % 2 == 0;
    const auto got = build_sets(s, delta, use_activity);
    const auto want = oracle::sets(s, delta, use_activity);
    if (canon(got.positives) != canon(want.positives) || canon(got.negatives) != canon(want.negatives)) ++mismatches;
    // Same label beyond delta must appear in neither set.
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (i == j || s[i].label != s[j].label || std::abs(s[i].time - s[j].time) < delta) continue;
        if (use_activity && s[i].activity != s[j].activity) continue;
        ++excluded;
        auto in = [&](const std::vector<std::size_t>& v) { return std::find(v.begin(), v.end(), j) != v.end(); };
        if (in(got.positives[i]) || in(got.negatives[i])) ++mismatches;
      }
    }
  }
  return {mismatches == 0 && excluded > 0,
          fmt("200 random batches: %zu mismatches against the double-loop oracle, %zu beyond-delta pairs excluded",
              mismatches, excluded)};
}

// ------------------------------------------------------------------ 7

TrainConfig reference_training(bool augment) {
  const auto& p = reference_profile();
  TrainConfig tc;
  tc.adam = {.lr = p.full.lr, .weight_decay = p.full.weight_decay};
  tc.epochs = kSupervisedEpochs;
  tc.batch_size = p.full.batch_size;
  tc.augment = reference_augment();
  tc.augment.enabled = augment;
  tc.seed = derive_seed(kSeed, "sampler");
  return tc;
}

Outcome supervised_reproduction(const Options&) {
  const Dataset& d = reference_data();
  const auto train = d.split(Split::train), test = d.split(Split::test);
  const std::uint64_t model_seed = derive_seed(kSeed, "model");

  Stopwatch clock;
  Model fa(reference_model(d), model_seed);
  train_supervised(fa, train, reference_training(true));
  const double secs = clock.seconds();
  EvalOptions eo;
  eo.augment = reference_augment();
  const auto ens = evaluate(fa, test, eo);
  eo.layer = static_cast<int>(fa.config().depth) - 1;
  const auto last = evaluate(fa, test, eo);

  Model plain(reference_model(d), model_seed);
  train_supervised(plain, train, reference_training(false));
  EvalOptions eo_plain;
  eo_plain.augment = reference_augment();
  eo_plain.augment.enabled = false;
  const auto off = evaluate(plain, test, eo_plain);

  const bool pass = ens.mof >= kSupervisedMoF && secs < kSupervisedBudgetSec && ens.edit >= last.edit &&
                    ens.edit >= off.edit;
  return {pass, fmt("test MoF %.1f (>= %.0f) after %zu epochs in %.0f s (< %.0f s); Edit ensemble %.1f vs last "
                    "decoder %.1f; Edit with augmentation %.1f vs without %.1f (MoF %.1f)",
                    ens.mof, kSupervisedMoF, kSupervisedEpochs, secs, kSupervisedBudgetSec, ens.edit, last.edit,
                    ens.edit, off.edit, off.mof)};
}

// ------------------------------------------------------------------ 8

ContrastConfig reference_contrast() {
  const auto& p = reference_profile();
  ContrastConfig c;
  c.K = p.K;
  c.delta = p.delta;
  c.num_clusters = p.clusters;
  return c;
}

Outcome unsupervised_direction(const Options&) {
  const Dataset& d = reference_data();
  const auto train = d.split(Split::train), test = d.split(Split::test);
  const auto& p = reference_profile();
  Stopwatch clock;
  Model m(reference_model(d), derive_seed(kSeed, "model"));
  PretrainConfig pc;
  pc.contrast = reference_contrast();
  pc.augment = reference_augment();
  pc.adam = {.lr = p.contrast.lr, .weight_decay = p.contrast.weight_decay};
  pc.epochs = p.contrast.epochs;
  pc.batch_size = p.contrast.batch_size;
  pc.seed = derive_seed(kSeed, "sampler");
  pretrain_unsupervised(m.backbone(), train, d.num_classes(), pc);

  LinearEvalConfig lc;
  lc.augment = reference_augment();
  lc.seed = derive_seed(kSeed, "linear");
  const auto frozen = linear_eval(m.backbone(), train, test, d.num_classes(), lc);
  const auto raw = linear_eval(m.backbone(), train, test, d.num_classes(), lc, true);
  const double gain = frozen.mof - raw.mof;
  return {gain >= kLinearGain, fmt("linear-eval MoF frozen %.1f vs raw inputs %.1f: gain %+.1f (>= %.0f), %.0f s",
                                   frozen.mof, raw.mof, gain, kLinearGain, clock.seconds())};
}

// ------------------------------------------------------------------ 9

Outcome icc_direction(const Options&) {
  const Dataset& d = reference_data();
  const auto train = d.split(Split::train), test = d.split(Split::test);
  const auto& p = reference_profile();
  Stopwatch clock;
  const SplitSpec split = make_split(train, d.num_classes(), 0.1, derive_seed(kSeed, "split"));

  ICCConfig ic;
  ic.iterations = 4;
  ic.labeled_fraction = 0.1;
  ic.lr_G = p.classify_g.lr;
  ic.lr_M_classify = p.classify_m.lr;
  ic.lr_M_contrast = p.contrast.lr;
  ic.weight_decay = p.classify_g.weight_decay;
  ic.pretrain_epochs = p.contrast.epochs;
  ic.contrast_epochs = p.contrast.epochs / 2;
  ic.classify_epochs = p.classify_g.epochs;
  ic.contrast_batch = p.contrast.batch_size;
  ic.classify_batch = p.classify_g.batch_size;
  ic.contrast = reference_contrast();
  ic.augment = reference_augment();
  ic.seed = derive_seed(kSeed, "sampler");

  // Labeled-only supervised baseline on the same videos.
  AuditedVideos base_data(d, split);
  Model base(reference_model(d), derive_seed(kSeed, "model"));
  TrainConfig tc = reference_training(true);
  tc.batch_size = p.classify_g.batch_size;
  train_supervised(base, base_data.labeled(), tc);
  EvalOptions eo;
  eo.augment = reference_augment();
  const double baseline = evaluate(base, test, eo).mof;

  AuditedVideos full_data(d, split);
  Model full(reference_model(d), derive_seed(kSeed, "model"));
  const auto reports = run_icc(full, full_data, test, ic);

  ICCConfig skip_cfg = ic;
  skip_cfg.skip_unsupervised = true;
  AuditedVideos skip_data(d, split);
  Model skip(reference_model(d), derive_seed(kSeed, "model"));
  const auto skip_reports = run_icc(skip, skip_data, test, skip_cfg);

  const double icc1 = reports.front().test.mof, icc4 = reports.back().test.mof;
  const double skip4 = skip_reports.back().test.mof;
  const double secs = clock.seconds();
  const bool leak = full_data.unlabeled_reads() + skip_data.unlabeled_reads() > 0;
  const bool pass = icc4 >= baseline + kICCGain && icc4 >= icc1 - kICCSlack && skip4 <= icc4 && secs < kICCBudgetSec &&
                    !leak;
  std::string trace;
  for (const auto& r : reports) trace += fmt(" %.1f", r.test.mof);
  return {pass, fmt("%zu labeled videos; MoF baseline %.1f, ICC_1..4%s (ICC_4 >= baseline + %.0f, >= ICC_1 - %.1f); "
                    "without unsupervised step %.1f (<= ICC_4); unlabeled label reads %zu; %.0f s (< %.0f s)",
                    split.labeled.size(), baseline, trace.c_str(), kICCGain, kICCSlack, skip4,
                    full_data.unlabeled_reads() + skip_data.unlabeled_reads(), secs, kICCBudgetSec)};
}

// ------------------------------------------------------------------ 10

Outcome calibration_accounting(const Options&) {
  Rng rng = make_stream(10, "calibration");
  const std::size_t C = 5;
  CalibrationAccumulator acc(15);
  std::size_t frames = 0;
  for (int v = 0; v < 20; ++v) {
    const std::size_t T = 20 + rng() % 200;
    Tensor p({C, T});
    std::vector<int> gt(T);
    for (std::size_t t = 0; t < T; ++t) {
      double s = 0.0;
      for (std::size_t k = 0; k < C; ++k) s += (p(k, t) = std::pow(uniform01(rng), 3.0));
      for (std::size_t k = 0; k < C; ++k) p(k, t) /= s;
      gt[t] = static_cast<int>(rng() % C);
    }
    acc.add(p, gt);
    frames += T;
  }
  const auto report = acc.report();
  std::size_t binned = 0;
  for (const auto& b : report.bins) binned += b.count;

  std::vector<int> gt(300);
  for (auto& y : gt) y = static_cast<int>(rng() % C);
  Tensor one_hot({C, gt.size()});
  for (std::size_t t = 0; t < gt.size(); ++t) one_hot(static_cast<std::size_t>(gt[t]), t) = 1.0;
  double worst_gap = 0.0;
  for (const auto& b : calibration(one_hot, gt).bins) {
    if (b.count) worst_gap = std::max(worst_gap, std::abs(b.gap()));
  }

  Tensor uniform({C, 1}, 1.0 / static_cast<double>(C));
  const auto h = wrong_entropy(uniform, std::vector<int>{static_cast<int>(C) - 1});
  const double entropy_err = h.size() == 1 ? std::abs(h[0] - std::log(static_cast<double>(C))) : INFINITY;

  return {binned == frames && report.frames == frames && worst_gap == 0.0 && entropy_err < kEntropyTol,
          fmt("bin counts %zu of %zu frames; one-hot max |gap| %.1e; uniform wrong entropy error %.1e (< %.0e)", binned,
              frames, worst_gap, entropy_err, kEntropyTol)};
}

// ------------------------------------------------------------------ 11

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return files;
}

Outcome cli_determinism(const Options& opt) {
  if (opt.cli.empty()) return {false, "no CLI binary given (--cli)"};
  const std::vector<std::string> commands{
      "gen-synth --out data --seed 3 --num-videos 8 --min-frames 96 --max-frames 160",
      "train --data data --out sup.c2fc --trace sup.csv --report sup.json --seed 5 --epochs 3 --width 8 --w0 2",
      "eval --ckpt sup.c2fc --data data --report eval.json --tta --seed 5 --w0 2",
      "calibrate --ckpt sup.c2fc --data data --out calib.csv --entropy-out entropy.csv --w0 2",
      "linear-eval --ckpt sup.c2fc --data data --report linear.json --raw-baseline --epochs 10 --w0 2 --seed 5",
      "pretrain --data data --out pre.c2fc --trace pre.csv --seed 5 --epochs 2 --width 8 --w0 2 --k 4",
      "icc --data data --out icc --seed 5 --iters 2 --width 8 --w0 2 --k 4 --pretrain-epochs 1 --contrast-epochs 1 "
      "--classify-epochs 2 --labeled-frac 0.4",
      "activity --data data train --out act.c2fc --trace act.csv --seed 5 --epochs 2 --width 8 --w0 2",
      "activity --data data eval --ckpt act.c2fc --report act.json --w0 2",
  };
  std::vector<std::map<std::string, std::string>> runs;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = opt.workdir / ("cli_run" + std::to_string(run));
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const auto& cmd : commands) {
      const std::string line = "cd '" + dir.string() + "' && '" + opt.cli + "' " + cmd + " 2>>log.txt";
      if (std::system(line.c_str()) != 0) return {false, "command failed: c2f " + cmd};
    }
    fs::remove(dir / "log.txt");
    runs.push_back(snapshot(dir));
  }
  std::size_t differing = 0;
  std::string first;
  for (const auto& [name, bytes] : runs[0]) {
    auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != bytes) {
      if (differing++ == 0) first = name;
    }
  }
  const bool same_set = runs[0].size() == runs[1].size();
  return {differing == 0 && same_set && !runs[0].empty(),
          fmt("%zu commands run twice; %zu output files compared, %zu differ%s%s", commands.size(), runs[0].size(),
              differing, first.empty() ? "" : ", first: ", first.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  bool strict = false;
  Options opt;
  std::string workdir;
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',')->check(CLI::Range(1, 11));
  app.add_flag("--strict", strict, "exit 1 when any criterion fails");
  app.add_option("--cli", opt.cli, "path of the c2f command-line binary");
  app.add_option("--workdir", workdir, "scratch directory");
  CLI11_PARSE(app, argc, argv);
  opt.workdir = workdir.empty() ? fs::temp_directory_path() / ("c2f_acceptance_" + std::to_string(::getpid()))
                                : fs::path(workdir);
  if (!opt.cli.empty()) opt.cli = fs::absolute(opt.cli).string();

  const std::vector<std::pair<const char*, std::function<Outcome(const Options&)>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"multi-resolution cosine identity", cosine_identity},
      {"nearest-upsampling continuity bound", continuity_bound},
      {"metric oracles", metric_oracles},
      {"augmentation distribution and pooling", augmentation_distribution},
      {"positive/negative sets", set_oracle},
      {"supervised toy reproduction", supervised_reproduction},
      {"unsupervised representation direction", unsupervised_direction},
      {"semi-supervised ICC direction", icc_direction},
      {"calibration accounting", calibration_accounting},
      {"CLI determinism", cli_determinism},
  };
  std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second(opt);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %2d %s: %s -- %s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  std::error_code ec;
  if (workdir.empty()) fs::remove_all(opt.workdir, ec);
  return strict && failures > 0 ? 1 : 0;
}
