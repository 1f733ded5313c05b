#include <cmath>
#include <map>
#include <vector>

#include "c2f/augmentation.hpp"
#include "doctest.h"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace c2f;
using c2f::testing::random_tensor;

TEST_CASE("window distribution puts pi0 on w0 and spreads the rest uniformly") {
  AugmentConfig cfg;  // w0 = 10
  Rng rng = make_stream(1, "windows");
  std::map<std::size_t, std::size_t> hist;
  const std::size_t draws = 100000;
  for (std::size_t i = 0; i < draws; ++i) hist[sample_window(cfg, rng)]++;
  CHECK(hist.begin()->first == 5);
  CHECK(hist.rbegin()->first == 20);
  CHECK(hist.size() == 16);
  CHECK(std::abs(static_cast<double>(hist[10]) / draws - 0.5) < 0.01);
  for (std::size_t w = 5; w <= 20; ++w) {
    if (w == 10) continue;
    CHECK(std::abs(static_cast<double>(hist[w]) / draws - 0.5 / 15) < 0.005);
  }
  double total = 0.0;
  for (std::size_t w = 0; w <= 25; ++w) total += cfg.probability(w);
  CHECK(total == doctest::Approx(1.0));
  CHECK(cfg.probability(4) == 0.0);
  CHECK(cfg.probability(21) == 0.0);
}

TEST_CASE("invalid augmentation configs are rejected") {
  AugmentConfig cfg;
  cfg.w0 = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.pi0 = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.tta_samples = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("pooling hand example") {
  // T=5, w=2: rows {0,1}, {2,3}, {4}.
  Tensor x({5, 2}, std::vector<double>{1, -1, 3, -2, 0, 5, 2, 4, -7, -8});
  const Tensor y = pool_features(x, 2);
  REQUIRE(y.dim(0) == 3);
  CHECK(y(0, 0) == 3);
  CHECK(y(0, 1) == -1);
  CHECK(y(1, 0) == 2);
  CHECK(y(1, 1) == 5);
  CHECK(y(2, 0) == -7);
  CHECK(y(2, 1) == -8);
  CHECK(pool_labels(std::vector<int>{1, 0, 2, 2, 2, 1, 0}, 3) == std::vector<int>{0, 2, 0});
  CHECK_THROWS_AS(pool_features(x, 6), std::invalid_argument);
}

TEST_CASE("pooling agrees with brute force on random cases") {
  Rng rng = make_stream(2, "pool");
  std::uniform_int_distribution<std::size_t> len(1, 60), width(1, 12), feat(1, 6);
  std::uniform_int_distribution<int> label(0, 4);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t T = len(rng);
    const std::size_t w = std::min(T, width(rng));
    const Tensor x = random_tensor({T, feat(rng)}, rng);
    const Tensor got = pool_features(x, w);
    const Tensor want = oracle::pool_max(x, w);
    REQUIRE(got.shape() == want.shape());
    bool same = true;
    for (std::size_t j = 0; j < got.size(); ++j) same = same && got[j] == want[j];
    CHECK(same);
    std::vector<int> y(T);
    for (auto& v : y) v = label(rng);
    CHECK(pool_labels(y, w) == oracle::pool_majority(y, w));
  }
}

TEST_CASE("short segments are counted against w0/2") {
  const std::vector<int> y{0, 0, 0, 0, 0, 0, 1, 1, 2, 2, 2, 2, 2};
  CHECK(short_segment_fraction(y, 10) == doctest::Approx(1.0 / 3.0));
  CHECK(short_segment_fraction(y, 4) == 0.0);
}

namespace {

Model tiny_model(std::uint64_t seed) {
  auto cfg = ModelConfig::uniform(3, 4, 2, 8);
  return Model(cfg, seed);
}

}  // namespace

TEST_CASE("segment probabilities are distributions at the original length") {
  Model m = tiny_model(3);
  Rng rng = make_stream(3, "x");
  const Tensor x = random_tensor({37, 3}, rng);
  for (std::size_t w : {1, 2, 3, 5}) {
    const Tensor p = segment_probs(m, x, w);
    REQUIRE(p.dim(0) == 4);
    REQUIRE(p.dim(1) == 37);
    for (std::size_t t = 0; t < 37; ++t) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += p(k, t);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("test-time augmentation averages predictions over sampled windows") {
  Model m = tiny_model(4);
  Rng data = make_stream(4, "x");
  const Tensor x = random_tensor({40, 3}, data);
  AugmentConfig cfg;
  cfg.w0 = 2;
  cfg.tta_samples = 7;
  Rng rng = make_stream(9, "tta");
  Rng replay = rng;
  const Tensor got = tta_predict(m, x, cfg, rng);
  Tensor want({4, 40});
  for (std::size_t i = 0; i < cfg.tta_samples; ++i) {
    const Tensor p = segment_probs(m, x, sample_window(cfg, replay));
    for (std::size_t j = 0; j < want.size(); ++j) want[j] += p[j] / 7.0;
  }
  for (std::size_t j = 0; j < want.size(); ++j) CHECK(got[j] == doctest::Approx(want[j]).epsilon(1e-12));

  // Exhaustive expectation over the w0=2 support {1, 3, 4} plus w0 itself.
  cfg.tta_samples = 4000;
  const Tensor mc = tta_predict(m, x, cfg, rng);
  Tensor expect({4, 40});
  for (std::size_t w = cfg.min_window(); w <= cfg.max_window(); ++w) {
    const Tensor p = segment_probs(m, x, w);
    for (std::size_t j = 0; j < expect.size(); ++j) expect[j] += cfg.probability(w) * p[j];
  }
  double worst = 0.0;
  for (std::size_t j = 0; j < expect.size(); ++j) worst = std::max(worst, std::abs(mc[j] - expect[j]));
  CHECK(worst < 0.02);

  Rng unused = make_stream(0, "none");
  const Tensor base = infer_probs(m.backbone(), m.heads(), x, cfg, false, unused);
  const Tensor direct = segment_probs(m, x, 2);
  for (std::size_t j = 0; j < base.size(); ++j) CHECK(base[j] == direct[j]);
}
