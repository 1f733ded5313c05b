#include "c2f/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "c2f/binary.hpp"
#include "c2f/rng.hpp"

namespace c2f {

namespace fs = std::filesystem;

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw FormatError("unknown split '" + s + "' (expected train or test)");
}

std::vector<const VideoSample*> Dataset::split(Split s) const {
  std::vector<const VideoSample*> out;
  for (const auto& v : videos) {
    if (v.split == s) out.push_back(&v);
  }
  return out;
}

namespace {

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, mode | std::ios::trunc);
  if (!os) throw FormatError(path.string() + ": cannot open for writing");
  return os;
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream is(path, mode);
  if (!is) throw FormatError(path.string() + ": cannot open");
  return is;
}

}  // namespace

void save_features(const fs::path& path, const Tensor& features) {
  if (features.ndim() != 2) throw ShapeError("features must be [T x F], got " + features.shape_string());
  auto os = open_out(path, std::ios::binary);
  os.write("C2FT", 4);
  binary::put_u32(os, 1);
  binary::put_u32(os, static_cast<std::uint32_t>(features.dim(0)));
  binary::put_u32(os, static_cast<std::uint32_t>(features.dim(1)));
  for (double v : features.data()) binary::put_f32(os, v);
  if (!os) throw FormatError(path.string() + ": write failed");
}

Tensor load_features(const fs::path& path) {
  auto is = open_in(path, std::ios::binary);
  const std::string what = path.string();
  binary::expect_magic(is, "C2FT", what);
  const auto version = binary::get_u32(is, what);
  if (version != 1) throw FormatError(what + ": unsupported version " + std::to_string(version));
  const std::size_t T = binary::get_u32(is, what);
  const std::size_t F = binary::get_u32(is, what);
  Tensor out({T, F});
  for (auto& v : out.data()) v = binary::get_f32(is, what);
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(what + ": trailing bytes after payload");
  require_finite(out, what);
  return out;
}

void save_labels(const fs::path& path, const std::vector<int>& labels, const std::vector<std::string>& names) {
  auto os = open_out(path);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= names.size()) {
      throw FormatError(path.string() + ": label id " + std::to_string(y) + " has no name");
    }
    os << names[static_cast<std::size_t>(y)] << '\n';
  }
}

std::vector<int> load_labels(const fs::path& path, const std::vector<std::string>& names) {
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < names.size(); ++i) index[names[i]] = static_cast<int>(i);
  auto is = open_in(path);
  std::vector<int> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto it = index.find(line);
    if (it == index.end()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": unknown action '" + line + "'");
    }
    out.push_back(it->second);
  }
  return out;
}

void save_mapping(const fs::path& path, const std::vector<std::string>& names) {
  auto os = open_out(path);
  for (std::size_t i = 0; i < names.size(); ++i) os << i << ' ' << names[i] << '\n';
}

std::vector<std::string> load_mapping(const fs::path& path) {
  auto is = open_in(path);
  std::map<std::size_t, std::string> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    long id = -1;
    std::string name;
    if (!(ss >> id >> name) || id < 0) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 'id name'");
    if (!entries.emplace(static_cast<std::size_t>(id), name).second) {
      throw FormatError(path.string() + ": duplicate id " + std::to_string(id));
    }
  }
  std::vector<std::string> out;
  for (const auto& [id, name] : entries) {
    if (id != out.size()) throw FormatError(path.string() + ": ids must be contiguous from 0");
    out.push_back(name);
  }
  if (std::set<std::string>(out.begin(), out.end()).size() != out.size()) {
    throw FormatError(path.string() + ": duplicate action name");
  }
  return out;
}

void save_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : entries) {
    j.push_back({{"id", e.id}, {"features", e.features}, {"labels", e.labels}, {"activity", e.activity},
                 {"split", to_string(e.split)}});
  }
  auto os = open_out(path);
  os << j.dump(2) << '\n';
}

std::vector<ManifestEntry> load_manifest(const fs::path& path) {
  auto is = open_in(path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw FormatError(path.string() + ": manifest must be a JSON array");
  std::vector<ManifestEntry> out;
  std::set<std::string> ids;
  for (const auto& item : j) {
    try {
      ManifestEntry e;
      e.id = item.at("id").get<std::string>();
      e.features = item.at("features").get<std::string>();
      e.labels = item.at("labels").get<std::string>();
      e.activity = item.at("activity").get<int>();
      e.split = parse_split(item.at("split").get<std::string>());
      if (!ids.insert(e.id).second) throw FormatError(path.string() + ": duplicate video id '" + e.id + "'");
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  return out;
}

std::vector<ManifestEntry> save_dataset(const fs::path& dir, const Dataset& data) {
  std::vector<ManifestEntry> entries;
  for (const auto& v : data.videos) {
    ManifestEntry e{v.id, "features/" + v.id + ".bin", "labels/" + v.id + ".txt", v.activity, v.split};
    save_features(dir / e.features, v.features);
    save_labels(dir / e.labels, v.labels, data.class_names);
    entries.push_back(std::move(e));
  }
  save_mapping(dir / "mapping.txt", data.class_names);
  save_manifest(dir / "manifest.json", entries);
  return entries;
}

Dataset load_dataset(const fs::path& dir) {
  Dataset data;
  data.class_names = load_mapping(dir / "mapping.txt");
  int max_activity = -1;
  for (const auto& e : load_manifest(dir / "manifest.json")) {
    VideoSample v;
    v.id = e.id;
    v.activity = e.activity;
    v.split = e.split;
    if (e.activity < 0) throw FormatError(e.id + ": negative activity id");
    v.features = load_features(dir / e.features);
    v.labels = load_labels(dir / e.labels, data.class_names);
    if (v.labels.size() != v.frames()) {
      throw FormatError(e.id + ": " + std::to_string(v.labels.size()) + " labels for " + std::to_string(v.frames()) +
                        " feature frames");
    }
    if (!data.videos.empty() && v.features.dim(1) != data.feature_dim()) {
      throw FormatError(e.id + ": feature dimension differs from the rest of the dataset");
    }
    max_activity = std::max(max_activity, v.activity);
    data.videos.push_back(std::move(v));
  }
  data.num_activities = static_cast<std::size_t>(max_activity + 1);
  return data;
}

void SyntheticConfig::validate(std::size_t min_model_frames) const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("invalid synthetic config: " + m); };
  if (num_videos < 2) fail("need at least 2 videos");
  if (num_actions < 2) fail("need at least 2 actions");
  if (num_activities < 1) fail("need at least 1 activity");
  if (feat_dim < 1) fail("feat_dim must be positive");
  if (min_frames > max_frames) fail("min_frames exceeds max_frames");
  if (min_frames < min_model_frames) fail("min_frames below the model's minimum input length");
  if (min_segments < 1 || min_segments > max_segments) fail("bad segment range");
  if (max_segments > min_frames) fail("more segments than frames");
  if (actions_per_activity < 1 || actions_per_activity > num_actions) fail("actions_per_activity out of range");
  if (!(sigma_between > sigma_within)) fail("sigma_between must exceed sigma_within");
  if (label_noise < 0.0 || label_noise >= 1.0) fail("label_noise must be in [0, 1)");
  if (flip_prob < 0.0 || flip_prob > 1.0) fail("flip_prob must be in [0, 1]");
  if (test_fraction <= 0.0 || test_fraction >= 1.0) fail("test_fraction must be in (0, 1)");
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng = make_stream(cfg.seed, "synthetic");
  const std::size_t C = cfg.num_actions, F = cfg.feat_dim;

  Dataset data;
  data.num_activities = cfg.num_activities;
  for (std::size_t a = 0; a < C; ++a) data.class_names.push_back("action" + std::to_string(a));

  Tensor means({C, F});
  for (auto& v : means.data()) v = normal(rng, 0.0, cfg.sigma_between);

  // Each activity walks a fixed ordered subset of actions; activities are
  // assigned round-robin over a shuffled action list so that all actions occur.
  std::vector<std::size_t> pool(C);
  std::iota(pool.begin(), pool.end(), 0);
  std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<std::vector<int>> orders(cfg.num_activities);
  std::size_t cursor = 0;
  for (auto& order : orders) {
    std::set<std::size_t> used;
    while (order.size() < cfg.actions_per_activity) {
      const std::size_t a = pool[cursor++ % C];
      if (used.insert(a).second) order.push_back(static_cast<int>(a));
    }
  }

  const std::size_t n_test =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(cfg.test_fraction * cfg.num_videos)), 1,
                              cfg.num_videos - 1);
  for (std::size_t n = 0; n < cfg.num_videos; ++n) {
    VideoSample v;
    char id[32];
    std::snprintf(id, sizeof id, "vid%03zu", n);
    v.id = id;
    v.activity = static_cast<int>(n % cfg.num_activities);
    // Interleave test videos so every activity is represented in both splits.
    v.split = (n % (cfg.num_videos / n_test) == 0 && n / (cfg.num_videos / n_test) < n_test) ? Split::test : Split::train;

    const auto& order = orders[static_cast<std::size_t>(v.activity)];
    const std::size_t T = static_cast<std::size_t>(uniform_int(rng, static_cast<long>(cfg.min_frames),
                                                               static_cast<long>(cfg.max_frames)));
    const std::size_t k = static_cast<std::size_t>(uniform_int(rng, static_cast<long>(cfg.min_segments),
                                                               static_cast<long>(cfg.max_segments)));
    // Markov walk over the activity's order: mostly advance, sometimes skip ahead, wrap around.
    std::vector<int> seq;
    std::size_t pos = static_cast<std::size_t>(uniform_int(rng, 0, 1)) % order.size();
    for (std::size_t s = 0; s < k; ++s) {
      seq.push_back(order[pos]);
      pos = (pos + (uniform01(rng) < 0.8 ? 1 : 2)) % order.size();
      if (order.size() > 1 && order[pos] == seq.back()) pos = (pos + 1) % order.size();
    }
    std::vector<double> weight(k);
    for (auto& w : weight) w = 0.5 + uniform01(rng);
    const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
    std::vector<std::size_t> bounds{0};
    double acc = 0.0;
    for (std::size_t s = 0; s + 1 < k; ++s) {
      acc += weight[s];
      bounds.push_back(std::max(bounds.back() + 1, static_cast<std::size_t>(std::lround(acc / total * T))));
    }
    bounds.push_back(T);
    v.labels.resize(T);
    std::vector<double> sign(T, 1.0);
    for (std::size_t s = 0; s < k; ++s) {
      const double sg = uniform01(rng) < cfg.flip_prob ? -1.0 : 1.0;
      for (std::size_t t = bounds[s]; t < bounds[s + 1]; ++t) {
        v.labels[t] = seq[s];
        sign[t] = sg;
      }
    }

    std::vector<double> offset(F);
    for (auto& o : offset) o = normal(rng, 0.0, cfg.sigma_video);
    Tensor raw({T, F});
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t f = 0; f < F; ++f) {
        raw(t, f) = sign[t] * means(static_cast<std::size_t>(v.labels[t]), f) + offset[f] +
                    normal(rng, 0.0, cfg.sigma_within);
      }
    }
    v.features = Tensor({T, F});
    const long r = static_cast<long>(cfg.smoothing);
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t lo = static_cast<std::size_t>(std::max(0L, static_cast<long>(t) - r));
      const std::size_t hi = std::min(T - 1, t + cfg.smoothing);
      for (std::size_t f = 0; f < F; ++f) {
        double s = 0.0;
        for (std::size_t u = lo; u <= hi; ++u) s += raw(u, f);
        v.features(t, f) = s / static_cast<double>(hi - lo + 1);
      }
    }
    if (cfg.label_noise > 0.0) {
      for (auto& y : v.labels) {
        if (uniform01(rng) < cfg.label_noise) y = static_cast<int>(uniform_int(rng, 0, static_cast<long>(C) - 1));
      }
    }
    data.videos.push_back(std::move(v));
  }
  return data;
}

SplitSpec make_split(const std::vector<const VideoSample*>& train, std::size_t num_classes, double labeled_fraction,
                     std::uint64_t seed) {
  if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) {
    throw std::invalid_argument("labeled fraction must lie in (0, 1]");
  }
  if (train.empty()) throw std::invalid_argument("cannot split an empty training set");
  const std::size_t n = train.size();
  const std::size_t want =
      std::min(n, std::max<std::size_t>(3, static_cast<std::size_t>(std::floor(labeled_fraction * n + 1e-9))));

  Rng rng = make_stream(seed, "split");
  std::vector<std::size_t> order(n);
  SplitSpec spec;
  spec.seed = seed;
  for (int attempt = 0; attempt <= 20; ++attempt) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> seen(num_classes, false);
    for (std::size_t i = 0; i < want; ++i) {
      for (int y : train[order[i]]->labels) {
        if (y >= 0 && static_cast<std::size_t>(y) < num_classes) seen[static_cast<std::size_t>(y)] = true;
      }
    }
    spec.covers_all_classes = std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
    if (spec.covers_all_classes) break;
  }
  std::vector<bool> labeled(n, false);
  for (std::size_t i = 0; i < want; ++i) labeled[order[i]] = true;
  for (std::size_t i = 0; i < n; ++i) (labeled[i] ? spec.labeled : spec.unlabeled).push_back(train[i]->id);
  return spec;
}

}  // namespace c2f
