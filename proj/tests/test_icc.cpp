#include <algorithm>
#include <vector>

#include "c2f/icc.hpp"
#include "doctest.h"

using namespace c2f;

namespace {

Dataset icc_data() {
  SyntheticConfig cfg;
  cfg.num_videos = 12;
  cfg.num_actions = 3;
  cfg.num_activities = 2;
  cfg.actions_per_activity = 2;
  cfg.feat_dim = 4;
  cfg.min_frames = 48;
  cfg.max_frames = 64;
  cfg.min_segments = 2;
  cfg.max_segments = 3;
  cfg.seed = 5;
  return generate_synthetic(cfg);
}

ICCConfig quick_icc() {
  ICCConfig ic;
  ic.iterations = 2;
  ic.pretrain_epochs = 2;
  ic.contrast_epochs = 2;
  ic.classify_epochs = 6;
  ic.contrast_batch = 4;
  ic.classify_batch = 3;
  ic.contrast.K = 4;
  ic.augment.w0 = 2;
  ic.seed = 3;
  return ic;
}

Model icc_model(const Dataset& d, std::uint64_t seed) {
  return Model(ModelConfig::uniform(d.feature_dim(), d.num_classes(), 3, 8), seed);
}

std::vector<std::vector<double>> snapshot(const std::vector<Parameter*>& ps) {
  std::vector<std::vector<double>> out;
  for (const auto* p : ps) out.emplace_back(p->value.data().begin(), p->value.data().end());
  return out;
}

}  // namespace

TEST_CASE("config validation") {
  ICCConfig ic;
  CHECK_NOTHROW(ic.validate());
  ic.iterations = 0;
  CHECK_THROWS_AS(ic.validate(), std::invalid_argument);
  ic = {};
  ic.labeled_fraction = 0.0;
  CHECK_THROWS_AS(ic.validate(), std::invalid_argument);
  ic = {};
  ic.lr_M_classify = 1.0;
  CHECK_THROWS_AS(ic.validate(), std::invalid_argument);
}

TEST_CASE("the audited view rejects inconsistent splits") {
  const Dataset d = icc_data();
  const auto train = d.split(Split::train);
  SplitSpec s = make_split(train, d.num_classes(), 0.3, 1);
  SplitSpec overlap = s;
  overlap.unlabeled.push_back(s.labeled.front());
  CHECK_THROWS_AS(AuditedVideos(d, overlap), std::invalid_argument);
  SplitSpec unknown = s;
  unknown.labeled.push_back("nope");
  CHECK_THROWS_AS(AuditedVideos(d, unknown), std::invalid_argument);
  SplitSpec none = s;
  none.labeled.clear();
  CHECK_THROWS_AS(AuditedVideos(d, none), std::invalid_argument);
}

TEST_CASE("classify steps read only labeled ground truth") {
  const Dataset d = icc_data();
  AuditedVideos av(d, make_split(d.split(Split::train), d.num_classes(), 0.3, 1));
  Model m = icc_model(d, 1);
  classify_step(m, av, quick_icc(), 7);
  CHECK(av.labeled_reads() > 0);
  CHECK(av.unlabeled_reads() == 0);
}

TEST_CASE("a frozen backbone stays untouched while the heads train") {
  const Dataset d = icc_data();
  AuditedVideos av(d, make_split(d.split(Split::train), d.num_classes(), 0.3, 1));
  Model m = icc_model(d, 1);
  auto ic = quick_icc();
  ic.lr_M_classify = 0.0;
  const auto backbone_before = snapshot(m.backbone().parameters());
  classify_step(m, av, ic, 7);
  CHECK(snapshot(m.backbone().parameters()) == backbone_before);
  // The step re-initialises the heads from its seed, then trains them.
  Model fresh = icc_model(d, 1);
  fresh.reset_heads(7);
  CHECK(snapshot(m.heads().parameters()) != snapshot(fresh.heads().parameters()));

  ic.lr_M_classify = 1e-5;
  classify_step(m, av, ic, 8);
  CHECK(snapshot(m.backbone().parameters()) != backbone_before);
}

TEST_CASE("classify step fits the labeled videos") {
  const Dataset d = icc_data();
  AuditedVideos av(d, make_split(d.split(Split::train), d.num_classes(), 0.3, 1));
  Model m = icc_model(d, 2);
  auto ic = quick_icc();
  ic.classify_epochs = 40;
  auto fit = [&] {
    SegmentationScorer s;
    for (const auto* v : av.labeled()) s.add(pseudo_label(m, *v, ic.augment), v->labels);
    return s.report().mof;
  };
  m.reset_heads(11);
  const double before = fit();
  classify_step(m, av, ic, 11);
  CHECK(fit() > before);
}

TEST_CASE("pseudo-labels are deterministic, in range and agree with evaluation") {
  const Dataset d = icc_data();
  Model m = icc_model(d, 3);
  AugmentConfig aug;
  aug.w0 = 2;
  const auto& v = d.videos.front();
  const auto a = pseudo_label(m, v, aug);
  CHECK(a == pseudo_label(m, v, aug));
  CHECK(a.size() == v.frames());
  for (int y : a) {
    CHECK(y >= 0);
    CHECK(y < static_cast<int>(d.num_classes()));
  }
  EvalOptions eo;
  eo.augment = aug;
  CHECK(mof(a, v.labels) == doctest::Approx(evaluate(m, {&v}, eo).mof));
}

TEST_CASE("contrast steps never read unlabeled ground truth") {
  const Dataset d = icc_data();
  AuditedVideos av(d, make_split(d.split(Split::train), d.num_classes(), 0.3, 1));
  Model m = icc_model(d, 4);
  auto ic = quick_icc();
  std::map<const VideoSample*, std::vector<int>> pseudo;
  for (const auto* v : av.unlabeled()) pseudo[v] = pseudo_label(m, *v, ic.augment);
  contrast_step(m, av, pseudo, ic, 9);
  CHECK(av.unlabeled_reads() == 0);
  CHECK(av.labeled_reads() > 0);
  pseudo.erase(pseudo.begin());
  CHECK_THROWS_AS(contrast_step(m, av, pseudo, ic, 9), std::invalid_argument);
}

TEST_CASE("full pipeline emits one report per iteration, deterministically") {
  const Dataset d = icc_data();
  const auto test = d.split(Split::test);
  const auto split = make_split(d.split(Split::train), d.num_classes(), 0.3, 1);
  auto run = [&](bool skip) {
    AuditedVideos av(d, split);
    Model m = icc_model(d, 5);
    auto ic = quick_icc();
    ic.skip_unsupervised = skip;
    std::vector<std::string> stages;
    auto reports = run_icc(m, av, test, ic, [&](const std::string& s, const ICCReport*) { stages.push_back(s); });
    CHECK(av.unlabeled_reads() == 0);
    CHECK(std::count(stages.begin(), stages.end(), "contrast 1 (unsupervised)") == (skip ? 0 : 1));
    return reports;
  };
  const auto a = run(false);
  const auto b = run(false);
  REQUIRE(a.size() == 2);
  CHECK(a[0].iteration == 1);
  CHECK(a[1].iteration == 2);
  CHECK(a[0].pseudo_label_mof < 0.0);
  CHECK(a[1].pseudo_label_mof >= 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].test.mof == b[i].test.mof);
    CHECK(a[i].test.edit == b[i].test.edit);
  }
  CHECK(run(true).size() == 2);
}

TEST_CASE("a fully labeled split still runs every iteration") {
  const Dataset d = icc_data();
  const auto split = make_split(d.split(Split::train), d.num_classes(), 1.0, 1);
  AuditedVideos av(d, split);
  CHECK(av.unlabeled().empty());
  Model m = icc_model(d, 6);
  auto ic = quick_icc();
  ic.iterations = 4;
  ic.pretrain_epochs = 1;
  ic.contrast_epochs = 1;
  ic.classify_epochs = 2;
  CHECK(run_icc(m, av, d.split(Split::test), ic).size() == 4);
}
