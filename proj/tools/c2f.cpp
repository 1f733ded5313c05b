// Command-line front end: data generation, training, evaluation and the
// semi-supervised pipeline. --config FILE.json (anywhere on the line) holds a
// flat object whose keys mirror the subcommand's long flags; flags given on
// the command line win.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "c2f/checkpoint.hpp"
#include "c2f/contrastive.hpp"
#include "c2f/dataset.hpp"
#include "c2f/icc.hpp"
#include "c2f/profiles.hpp"
#include "c2f/supervised.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace c2f;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kRuntime = 4 };

/// Flat JSON object -> CLI11 config items. Each key is the long name of a
/// flag of the selected subcommand chain (or of one of its parents).
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw CLI::ConversionError("config must be a JSON object");

    std::vector<const CLI::App*> chain;
    for (const CLI::App* app = root_; !app->get_subcommands().empty();) {
      app = app->get_subcommands().front();
      chain.push_back(app);
    }

    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : doc.items()) {
      CLI::ConfigItem item;
      item.name = key;
      // Deepest subcommand that owns --key.
      std::vector<std::string> parents;
      for (std::size_t depth = chain.size(); depth > 0; --depth) {
        if (chain[depth - 1]->get_option_no_throw("--" + key) != nullptr) {
          for (std::size_t i = 0; i < depth; ++i) parents.push_back(chain[i]->get_name());
          break;
        }
      }
      if (parents.empty()) throw CLI::ConversionError("unknown config key '" + key + "'");
      item.parents = parents;
      auto scalar = [](const json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return std::string(v.get<bool>() ? "true" : "false");
        return v.dump();
      };
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  const CLI::App* root_;
};

struct Seeds {
  std::uint64_t model, sampler, split;
};

Seeds fan_out(std::uint64_t seed) {
  return {derive_seed(seed, "model"), derive_seed(seed, "sampler"), derive_seed(seed, "split")};
}

// Lets --config (a root flag) appear after the subcommand name.
void inherit_config(CLI::App* app) {
  app->fallthrough();
  app->footer("--config FILE.json: flat object keyed by the long flags above; command-line flags win.");
}

json to_json(const SegReport& r) {
  return {{"mof", r.mof},     {"edit", r.edit},     {"f1@10", r.f1_10}, {"f1@25", r.f1_25},
          {"f1@50", r.f1_50}, {"frames", r.frames}, {"videos", r.videos}};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

Split split_arg(const std::string& s) { return parse_split(s); }

/// Topology flags shared by the commands that build a fresh model.
struct ModelFlags {
  std::size_t width = 0;  // 0: the full-size channel table
  std::size_t depth = 6;
  std::size_t kernel = 5;
  bool no_skip = false;
  bool learned_alpha = false;
  std::string upsample = "linear";

  void add(CLI::App* app) {
    app->add_option("--width", width, "uniform channel width (0 = full-size table)");
    app->add_option("--depth", depth, "encoder/decoder depth")->check(CLI::Range(1, 10));
    app->add_option("--kernel", kernel, "temporal kernel size")->check(CLI::Range(1, 31));
    app->add_flag("--no-skip", no_skip, "drop encoder-decoder skip connections");
    app->add_flag("--learned-alpha", learned_alpha, "learn the ensemble weights");
    app->add_option("--upsample", upsample, "upsampling mode")->check(CLI::IsMember({"linear", "nearest"}));
  }

  ModelConfig build(const Dataset& d, bool with_activity) const {
    ModelConfig cfg;
    if (width > 0) {
      cfg = ModelConfig::uniform(d.feature_dim(), d.num_classes(), depth, width);
    } else {
      cfg.input_dim = d.feature_dim();
      cfg.num_classes = d.num_classes();
      if (depth != cfg.depth) throw std::invalid_argument("--depth other than 6 needs --width");
    }
    cfg.kernel = kernel;
    cfg.skip_connections = !no_skip;
    cfg.learned_alpha = learned_alpha;
    cfg.upsample_mode = upsample == "linear" ? ops::UpsampleMode::linear : ops::UpsampleMode::nearest;
    if (with_activity) cfg.num_activities = d.num_activities;
    cfg.validate();
    return cfg;
  }
};

struct AugmentFlags {
  std::size_t w0 = 10;
  double pi0 = 0.5;
  std::size_t tta_samples = 5;
  bool no_augment = false;

  void add(CLI::App* app) {
    app->add_option("--w0", w0, "base pooling window");
    app->add_option("--pi0", pi0, "probability of the base window");
    app->add_option("--tta-samples", tta_samples, "windows averaged at test time");
    app->add_flag("--no-augment", no_augment, "always pool with w0");
  }

  AugmentConfig build() const {
    AugmentConfig a;
    a.w0 = w0;
    a.pi0 = pi0;
    a.tta_samples = tta_samples;
    a.enabled = !no_augment;
    a.validate();
    return a;
  }
};

struct ContrastFlags {
  std::size_t k = 20;
  double epsilon = 0.0;
  double delta = 0.03;
  double tau = 0.1;
  std::size_t clusters = 0;
  std::string video_level = "on";

  void add(CLI::App* app) {
    app->add_option("--k", k, "partitions per video");
    app->add_option("--epsilon", epsilon, "companion offset (0 = 1/(3K))");
    app->add_option("--delta", delta, "temporal proximity for positives");
    app->add_option("--tau", tau, "temperature");
    app->add_option("--clusters", clusters, "k-means clusters (0 = 2C)");
    app->add_option("--video-level", video_level, "video-level contrast")->check(CLI::IsMember({"on", "off"}));
  }

  ContrastConfig build() const {
    ContrastConfig c;
    c.K = k;
    c.epsilon = epsilon;
    c.delta = delta;
    c.tau = tau;
    c.num_clusters = clusters;
    c.use_video_level = video_level == "on";
    c.validate();
    return c;
  }
};

/// Fills options the user left unset from a named dataset profile.
void apply_profile(CLI::App* app, const std::string& name, const std::map<std::string, std::string>& values) {
  if (name.empty()) return;
  for (const auto& [flag, value] : values) {
    CLI::Option* opt = app->get_option_no_throw(flag);
    if (opt != nullptr && opt->count() == 0) {
      opt->add_result(value);
      opt->run_callback();
    }
  }
}

std::string num(double v) { return fmt(v); }
std::string num(std::size_t v) { return std::to_string(v); }

// ---------------------------------------------------------------- gen-synth

void add_gen_synth(CLI::App& root) {
  auto* cmd = root.add_subcommand("gen-synth", "generate a synthetic dataset");
  inherit_config(cmd);
  auto cfg = std::make_shared<SyntheticConfig>();
  auto out = std::make_shared<std::string>();
  cmd->add_option("--out", *out, "output directory")->required();
  cmd->add_option("--seed", cfg->seed, "generator seed");
  cmd->add_option("--num-videos", cfg->num_videos);
  cmd->add_option("--num-actions", cfg->num_actions);
  cmd->add_option("--num-activities", cfg->num_activities);
  cmd->add_option("--actions-per-activity", cfg->actions_per_activity);
  cmd->add_option("--feat-dim", cfg->feat_dim);
  cmd->add_option("--min-frames", cfg->min_frames);
  cmd->add_option("--max-frames", cfg->max_frames);
  cmd->add_option("--min-segments", cfg->min_segments);
  cmd->add_option("--max-segments", cfg->max_segments);
  cmd->add_option("--sigma-between", cfg->sigma_between);
  cmd->add_option("--sigma-within", cfg->sigma_within);
  cmd->add_option("--sigma-video", cfg->sigma_video);
  cmd->add_option("--flip-prob", cfg->flip_prob);
  cmd->add_option("--smoothing", cfg->smoothing);
  cmd->add_option("--label-noise", cfg->label_noise);
  cmd->add_option("--test-fraction", cfg->test_fraction);
  cmd->callback([cfg, out] {
    const Dataset d = generate_synthetic(*cfg);
    save_dataset(*out, d);
    std::cerr << "wrote " << d.videos.size() << " videos to " << *out << "\n";
  });
}

// ---------------------------------------------------------------- train

void add_train(CLI::App& root) {
  auto* cmd = root.add_subcommand("train", "supervised training");
  inherit_config(cmd);
  struct Args {
    std::string data, out, trace, report, profile;
    std::uint64_t seed = 0;
    double lr = 1e-3, wd = 1e-3, lambda_tr = 0.15, eps_max = 4.0;
    std::size_t epochs = 200, batch = 8;
    bool loss_per_layer = false;
    ModelFlags model;
    AugmentFlags augment;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("--data", a->data, "dataset directory")->required();
  cmd->add_option("--out", a->out, "checkpoint path")->required();
  cmd->add_option("--trace", a->trace, "loss trace CSV (epoch,ce,tr,total)");
  cmd->add_option("--report", a->report, "test-split report JSON after training");
  cmd->add_option("--profile", a->profile, "dataset profile for unset hyper-parameters");
  cmd->add_option("--seed", a->seed);
  cmd->add_option("--lr", a->lr);
  cmd->add_option("--wd", a->wd);
  cmd->add_option("--epochs", a->epochs);
  cmd->add_option("--batch", a->batch);
  cmd->add_option("--lambda-tr", a->lambda_tr);
  cmd->add_option("--eps-max", a->eps_max);
  cmd->add_flag("--loss-per-layer", a->loss_per_layer, "loss on every decoder output");
  a->model.add(cmd);
  a->augment.add(cmd);
  cmd->callback([a, cmd] {
    if (!a->profile.empty()) {
      const auto& p = profile(a->profile);
      apply_profile(cmd, a->profile,
                    {{"--lr", num(p.full.lr)},
                     {"--wd", num(p.full.weight_decay)},
                     {"--epochs", num(p.full.epochs)},
                     {"--batch", num(p.full.batch_size)},
                     {"--w0", num(p.w0)}});
    }
    const Dataset d = load_dataset(a->data);
    const Seeds s = fan_out(a->seed);
    Model m(a->model.build(d, false), s.model);
    TrainConfig tc;
    tc.adam = {.lr = a->lr, .weight_decay = a->wd};
    tc.epochs = a->epochs;
    tc.batch_size = a->batch;
    tc.augment = a->augment.build();
    tc.loss.lambda_tr = a->lambda_tr;
    tc.loss.eps_max = a->eps_max;
    tc.loss_per_layer = a->loss_per_layer;
    tc.seed = s.sampler;
    const auto stats = train_supervised(m, d.split(Split::train), tc, [](const EpochStats& e) {
      std::cerr << "epoch " << e.epoch << " loss " << fmt(e.total) << "\n";
    });
    save_checkpoint(a->out, m);
    if (!a->trace.empty()) {
      std::string csv = "epoch,ce,tr,total\n";
      for (const auto& e : stats) csv += std::to_string(e.epoch) + "," + fmt(e.ce) + "," + fmt(e.tr) + "," + fmt(e.total) + "\n";
      write_text(a->trace, csv);
    }
    if (!a->report.empty()) {
      EvalOptions eo;
      eo.augment = tc.augment;
      write_json(a->report, {{"split", "test"}, {"report", to_json(evaluate(m, d.split(Split::test), eo))}});
    }
  });
}

// ---------------------------------------------------------------- pretrain

void add_pretrain(CLI::App& root) {
  auto* cmd = root.add_subcommand("pretrain", "unsupervised contrastive representation learning");
  inherit_config(cmd);
  struct Args {
    std::string data, out, trace, profile;
    std::uint64_t seed = 0;
    double lr = 1e-3, wd = 1e-3;
    std::size_t epochs = 100, batch = 10;
    ModelFlags model;
    AugmentFlags augment;
    ContrastFlags contrast;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("--data", a->data, "dataset directory")->required();
  cmd->add_option("--out", a->out, "checkpoint path")->required();
  cmd->add_option("--trace", a->trace, "loss trace CSV (epoch,loss)");
  cmd->add_option("--profile", a->profile, "dataset profile for unset hyper-parameters");
  cmd->add_option("--seed", a->seed);
  cmd->add_option("--lr", a->lr);
  cmd->add_option("--wd", a->wd);
  cmd->add_option("--epochs", a->epochs);
  cmd->add_option("--batch", a->batch);
  a->model.add(cmd);
  a->augment.add(cmd);
  a->contrast.add(cmd);
  cmd->callback([a, cmd] {
    if (!a->profile.empty()) {
      const auto& p = profile(a->profile);
      apply_profile(cmd, a->profile,
                    {{"--lr", num(p.contrast.lr)},
                     {"--wd", num(p.contrast.weight_decay)},
                     {"--epochs", num(p.contrast.epochs)},
                     {"--batch", num(p.contrast.batch_size)},
                     {"--w0", num(p.w0)},
                     {"--k", num(p.K)},
                     {"--delta", num(p.delta)},
                     {"--clusters", num(p.clusters)}});
    }
    const Dataset d = load_dataset(a->data);
    const Seeds s = fan_out(a->seed);
    Model m(a->model.build(d, false), s.model);
    PretrainConfig pc;
    pc.contrast = a->contrast.build();
    pc.augment = a->augment.build();
    pc.adam = {.lr = a->lr, .weight_decay = a->wd};
    pc.epochs = a->epochs;
    pc.batch_size = a->batch;
    pc.seed = s.sampler;
    const auto trace = pretrain_unsupervised(m.backbone(), d.split(Split::train), d.num_classes(), pc,
                                             [](const ContrastEpoch& e) {
                                               std::cerr << "epoch " << e.epoch << " loss " << fmt(e.loss) << "\n";
                                             });
    save_checkpoint(a->out, m);
    if (!a->trace.empty()) {
      std::string csv = "epoch,loss\n";
      for (const auto& e : trace) csv += std::to_string(e.epoch) + "," + fmt(e.loss) + "\n";
      write_text(a->trace, csv);
    }
  });
}

// ---------------------------------------------------------------- icc

void add_icc(CLI::App& root) {
  auto* cmd = root.add_subcommand("icc", "semi-supervised iterative contrast-classify");
  inherit_config(cmd);
  struct Args {
    std::string data, out, profile;
    std::uint64_t seed = 0;
    double labeled_frac = 0.1;
    std::size_t iters = 4;
    bool skip_unsupervised = false, classify_transition = false;
    double lr_g = 1e-2, lr_m_classify = 1e-5, lr_m_contrast = 1e-3, wd = 1e-3;
    std::size_t pretrain_epochs = 100, contrast_epochs = 30, classify_epochs = 150;
    std::size_t contrast_batch = 10, classify_batch = 5;
    ModelFlags model;
    AugmentFlags augment;
    ContrastFlags contrast;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("--data", a->data, "dataset directory")->required();
  cmd->add_option("--out", a->out, "output directory (reports, split, checkpoint)")->required();
  cmd->add_option("--profile", a->profile, "dataset profile for unset hyper-parameters");
  cmd->add_option("--seed", a->seed);
  cmd->add_option("--labeled-frac", a->labeled_frac, "fraction of training videos with labels");
  cmd->add_option("--iters", a->iters, "contrast-classify iterations");
  cmd->add_flag("--skip-unsupervised", a->skip_unsupervised, "start from an untrained backbone");
  cmd->add_flag("--classify-transition", a->classify_transition, "add the transition loss in classify steps");
  cmd->add_option("--lr-g", a->lr_g);
  cmd->add_option("--lr-m-classify", a->lr_m_classify);
  cmd->add_option("--lr-m-contrast", a->lr_m_contrast);
  cmd->add_option("--wd", a->wd);
  cmd->add_option("--pretrain-epochs", a->pretrain_epochs);
  cmd->add_option("--contrast-epochs", a->contrast_epochs);
  cmd->add_option("--classify-epochs", a->classify_epochs);
  cmd->add_option("--contrast-batch", a->contrast_batch);
  cmd->add_option("--classify-batch", a->classify_batch);
  a->model.add(cmd);
  a->augment.add(cmd);
  a->contrast.add(cmd);
  cmd->callback([a, cmd] {
    if (!a->profile.empty()) {
      const auto& p = profile(a->profile);
      apply_profile(cmd, a->profile,
                    {{"--lr-g", num(p.classify_g.lr)},
                     {"--lr-m-classify", num(p.classify_m.lr)},
                     {"--lr-m-contrast", num(p.contrast.lr)},
                     {"--wd", num(p.classify_g.weight_decay)},
                     {"--pretrain-epochs", num(p.contrast.epochs)},
                     {"--classify-epochs", num(p.classify_g.epochs)},
                     {"--classify-batch", num(p.classify_g.batch_size)},
                     {"--contrast-batch", num(p.contrast.batch_size)},
                     {"--w0", num(p.w0)},
                     {"--k", num(p.K)},
                     {"--delta", num(p.delta)},
                     {"--clusters", num(p.clusters)}});
    }
    const Dataset d = load_dataset(a->data);
    const Seeds s = fan_out(a->seed);
    const SplitSpec split = make_split(d.split(Split::train), d.num_classes(), a->labeled_frac, s.split);
    if (!split.covers_all_classes) std::cerr << "warning: labeled videos do not cover every action class\n";
    AuditedVideos av(d, split);
    Model m(a->model.build(d, false), s.model);
    ICCConfig ic;
    ic.iterations = a->iters;
    ic.labeled_fraction = a->labeled_frac;
    ic.skip_unsupervised = a->skip_unsupervised;
    ic.classify_transition = a->classify_transition;
    ic.lr_G = a->lr_g;
    ic.lr_M_classify = a->lr_m_classify;
    ic.lr_M_contrast = a->lr_m_contrast;
    ic.weight_decay = a->wd;
    ic.pretrain_epochs = a->pretrain_epochs;
    ic.contrast_epochs = a->contrast_epochs;
    ic.classify_epochs = a->classify_epochs;
    ic.contrast_batch = a->contrast_batch;
    ic.classify_batch = a->classify_batch;
    ic.contrast = a->contrast.build();
    ic.augment = a->augment.build();
    ic.seed = s.sampler;
    const fs::path out = a->out;
    fs::create_directories(out);
    write_json(out / "split.json", {{"labeled", split.labeled},
                                    {"unlabeled", split.unlabeled},
                                    {"seed", split.seed},
                                    {"covers_all_classes", split.covers_all_classes}});
    run_icc(m, av, d.split(Split::test), ic, [&](const std::string& stage, const ICCReport* r) {
      if (r == nullptr) {
        std::cerr << stage << "\n";
        return;
      }
      json j{{"iteration", r->iteration},
             {"test", to_json(r->test)},
             {"labeled_train", to_json(r->labeled_train)},
             {"label_reads", {{"labeled", av.labeled_reads()}, {"unlabeled", av.unlabeled_reads()}}}};
      if (r->pseudo_label_mof >= 0.0) j["pseudo_label_mof"] = r->pseudo_label_mof;
      write_json(out / ("icc_" + std::to_string(r->iteration) + ".json"), j);
      std::cerr << "ICC_" << r->iteration << " test MoF " << fmt(r->test.mof) << "\n";
    });
    save_checkpoint(out / "model.c2fc", m);
  });
}

// ---------------------------------------------------------------- eval

void add_eval(CLI::App& root) {
  auto* cmd = root.add_subcommand("eval", "segmentation metrics of a checkpoint");
  inherit_config(cmd);
  struct Args {
    std::string ckpt, data, split = "test", report;
    bool tta = false, per_video_f1 = false;
    int layer = -1;
    std::uint64_t seed = 0;
    AugmentFlags augment;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("--ckpt", a->ckpt, "checkpoint")->required();
  cmd->add_option("--data", a->data, "dataset directory")->required();
  cmd->add_option("--split", a->split)->check(CLI::IsMember({"train", "test"}));
  cmd->add_option("--report", a->report, "report JSON")->required();
  cmd->add_flag("--tta,!--no-tta", a->tta, "average predictions over sampled windows");
  cmd->add_flag("--per-video-f1", a->per_video_f1, "average F1 per video instead of pooling counts");
  cmd->add_option("--layer", a->layer, "score one decoder output (0-based) instead of the ensemble");
  cmd->add_option("--seed", a->seed);
  a->augment.add(cmd);
  cmd->callback([a] {
    Model m = load_checkpoint(a->ckpt);
    const Dataset d = load_dataset(a->data);
    EvalOptions eo;
    eo.augment = a->augment.build();
    eo.tta = a->tta;
    eo.seed = fan_out(a->seed).sampler;
    eo.per_video_f1 = a->per_video_f1;
    eo.layer = a->layer;
    const auto videos = d.split(split_arg(a->split));
    const auto r = evaluate(m, videos, eo);
    json j{{"split", a->split}, {"tta", a->tta}, {"layer", a->layer}, {"report", to_json(r)}};
    if (a->tta) {
      eo.tta = false;
      const auto plain = evaluate(m, videos, eo);
      j["no_tta"] = to_json(plain);
      j["tta_mof_delta"] = r.mof - plain.mof;
    }
    write_json(a->report, j);
  });
}

// ---------------------------------------------------------------- linear-eval

void add_linear_eval(CLI::App& root) {
  auto* cmd = root.add_subcommand("linear-eval", "linear classifier on frozen features");
  inherit_config(cmd);
  struct Args {
    std::string ckpt, data, report, upsample = "linear";
    bool raw_baseline = false;
    std::size_t epochs = 300;
    double lr = 1e-2;
    std::uint64_t seed = 0;
    AugmentFlags augment;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("--ckpt", a->ckpt, "checkpoint (omit to score only the raw baseline)");
  cmd->add_option("--data", a->data, "dataset directory")->required();
  cmd->add_option("--report", a->report, "report JSON")->required();
  cmd->add_flag("--raw-baseline", a->raw_baseline, "also fit the classifier on raw input features");
  cmd->add_option("--epochs", a->epochs);
  cmd->add_option("--lr", a->lr);
  cmd->add_option("--upsample", a->upsample)->check(CLI::IsMember({"linear", "nearest"}));
  cmd->add_option("--seed", a->seed);
  a->augment.add(cmd);
  cmd->callback([a] {
    if (a->ckpt.empty() && !a->raw_baseline) throw std::invalid_argument("linear-eval needs --ckpt or --raw-baseline");
    const Dataset d = load_dataset(a->data);
    LinearEvalConfig lc;
    lc.epochs = a->epochs;
    lc.adam.lr = a->lr;
    lc.augment = a->augment.build();
    lc.upsample_mode = a->upsample == "linear" ? ops::UpsampleMode::linear : ops::UpsampleMode::nearest;
    lc.seed = fan_out(a->seed).sampler;
    const auto train = d.split(Split::train);
    const auto test = d.split(Split::test);
    json j;
    std::optional<Model> m;
    if (!a->ckpt.empty()) {
      m = load_checkpoint(a->ckpt);
      j["frozen"] = to_json(linear_eval(m->backbone(), train, test, d.num_classes(), lc));
    }
    if (a->raw_baseline) {
      Backbone unused;
      j["raw"] = to_json(linear_eval(m ? m->backbone() : unused, train, test, d.num_classes(), lc, true));
    }
    if (j.contains("frozen") && j.contains("raw")) {
      j["mof_gain"] = j["frozen"]["mof"].get<double>() - j["raw"]["mof"].get<double>();
    }
    write_json(a->report, j);
  });
}

// ---------------------------------------------------------------- calibrate

void add_calibrate(CLI::App& root) {
  auto* cmd = root.add_subcommand("calibrate", "reliability bins and wrong-prediction entropy");
  inherit_config(cmd);
  struct Args {
    std::string ckpt, data, out, entropy_out, split = "test";
    std::size_t bins = 15, entropy_bins = 20;
    bool tta = false;
    std::uint64_t seed = 0;
    AugmentFlags augment;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("--ckpt", a->ckpt, "checkpoint")->required();
  cmd->add_option("--data", a->data, "dataset directory")->required();
  cmd->add_option("--out", a->out, "calibration CSV")->required();
  cmd->add_option("--entropy-out", a->entropy_out, "entropy histogram CSV");
  cmd->add_option("--bins", a->bins)->check(CLI::PositiveNumber);
  cmd->add_option("--entropy-bins", a->entropy_bins)->check(CLI::PositiveNumber);
  cmd->add_option("--split", a->split)->check(CLI::IsMember({"train", "test"}));
  cmd->add_flag("--tta,!--no-tta", a->tta);
  cmd->add_option("--seed", a->seed);
  a->augment.add(cmd);
  cmd->callback([a] {
    Model m = load_checkpoint(a->ckpt);
    const Dataset d = load_dataset(a->data);
    const auto videos = d.split(split_arg(a->split));
    EvalOptions eo;
    eo.augment = a->augment.build();
    eo.tta = a->tta;
    eo.seed = fan_out(a->seed).sampler;
    std::vector<Tensor> probs;
    evaluate(m, videos, eo, &probs);
    CalibrationAccumulator acc(a->bins, a->entropy_bins);
    for (std::size_t i = 0; i < videos.size(); ++i) acc.add(probs[i], videos[i]->labels);
    const auto r = acc.report();
    std::string csv = "bin_lo,bin_hi,count,acc,conf,gap\n";
    for (const auto& b : r.bins) {
      csv += fmt(b.lo) + "," + fmt(b.hi) + "," + std::to_string(b.count) + "," + fmt(b.acc) + "," + fmt(b.conf) + "," +
             fmt(b.gap()) + "\n";
    }
    write_text(a->out, csv);
    if (!a->entropy_out.empty()) {
      std::string ent = "bin_lo,bin_hi,count\n";
      for (const auto& b : r.wrong_entropy) ent += fmt(b.lo) + "," + fmt(b.hi) + "," + std::to_string(b.count) + "\n";
      write_text(a->entropy_out, ent);
    }
  });
}

// ---------------------------------------------------------------- activity

void add_activity(CLI::App& root) {
  auto* cmd = root.add_subcommand("activity", "complex-activity recognition");
  inherit_config(cmd);
  cmd->require_subcommand(1);
  auto data = std::make_shared<std::string>();
  cmd->add_option("--data", *data, "dataset directory")->required();

  auto* train = cmd->add_subcommand("train", "train the backbone and activity head");
  inherit_config(train);
  struct TrainArgs {
    std::string out, trace;
    std::uint64_t seed = 0;
    double lr = 1e-3, wd = 1e-3;
    std::size_t epochs = 100, batch = 8;
    ModelFlags model;
    AugmentFlags augment;
  };
  auto t = std::make_shared<TrainArgs>();
  train->add_option("--out", t->out, "checkpoint path")->required();
  train->add_option("--trace", t->trace, "loss trace CSV (epoch,loss)");
  train->add_option("--seed", t->seed);
  train->add_option("--lr", t->lr);
  train->add_option("--wd", t->wd);
  train->add_option("--epochs", t->epochs);
  train->add_option("--batch", t->batch);
  t->model.add(train);
  t->augment.add(train);
  train->callback([t, data] {
    const Dataset d = load_dataset(*data);
    if (d.num_activities < 2) throw std::invalid_argument("dataset has fewer than two activities");
    const Seeds s = fan_out(t->seed);
    Model m(t->model.build(d, true), s.model);
    TrainConfig tc;
    tc.adam = {.lr = t->lr, .weight_decay = t->wd};
    tc.epochs = t->epochs;
    tc.batch_size = t->batch;
    tc.augment = t->augment.build();
    tc.seed = s.sampler;
    const auto stats = train_activity(m, d.split(Split::train), tc, [](const EpochStats& e) {
      std::cerr << "epoch " << e.epoch << " loss " << fmt(e.total) << "\n";
    });
    save_checkpoint(t->out, m);
    if (!t->trace.empty()) {
      std::string csv = "epoch,loss\n";
      for (const auto& e : stats) csv += std::to_string(e.epoch) + "," + fmt(e.total) + "\n";
      write_text(t->trace, csv);
    }
  });

  auto* eval = cmd->add_subcommand("eval", "activity accuracy of a checkpoint");
  inherit_config(eval);
  struct EvalArgs {
    std::string ckpt, report, split = "test";
    AugmentFlags augment;
  };
  auto e = std::make_shared<EvalArgs>();
  eval->add_option("--ckpt", e->ckpt, "checkpoint")->required();
  eval->add_option("--report", e->report, "report JSON")->required();
  eval->add_option("--split", e->split)->check(CLI::IsMember({"train", "test"}));
  e->augment.add(eval);
  eval->callback([e, data] {
    Model m = load_checkpoint(e->ckpt);
    if (!m.has_activity_head()) throw std::invalid_argument("checkpoint has no activity head");
    const Dataset d = load_dataset(*data);
    const auto videos = d.split(split_arg(e->split));
    write_json(e->report, {{"split", e->split},
                           {"videos", videos.size()},
                           {"accuracy", activity_accuracy(m, videos, e->augment.build())}});
  });
}

int fail(int code, const std::string& kind, const std::string& message) {
  std::string line = message;
  for (auto& ch : line) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  std::cerr << "error: " << kind << ": " << line << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coarse-to-fine temporal action segmentation toolkit"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::simple);
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.set_config("--config", "", "JSON file whose keys mirror the long flags of the subcommand");
  add_gen_synth(app);
  add_train(app);
  add_pretrain(app);
  add_icc(app);
  add_eval(app);
  add_linear_eval(app);
  add_calibrate(app);
  add_activity(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, "usage", e.what());
  } catch (const FormatError& e) {
    return fail(kData, "data", e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(kData, "data", e.what());
  } catch (const NumericError& e) {
    return fail(kRuntime, "numeric", e.what());
  } catch (const ShapeError& e) {
    return fail(kRuntime, "shape", e.what());
  } catch (const std::invalid_argument& e) {
    return fail(kUsage, "config", e.what());
  } catch (const std::exception& e) {
    return fail(kRuntime, "runtime", e.what());
  }
  return kOk;
}
