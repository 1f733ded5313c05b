#include "c2f/checkpoint.hpp"

#include <fstream>
#include <map>

#include "c2f/binary.hpp"
#include "c2f/dataset.hpp"

namespace c2f {

namespace {

constexpr std::uint32_t kVersion = 1;
const char* const kConfigName = "meta.config";

void append_list(std::vector<double>& out, const std::vector<std::size_t>& xs) {
  out.push_back(static_cast<double>(xs.size()));
  for (auto x : xs) out.push_back(static_cast<double>(x));
}

}  // namespace

Tensor encode_config(const ModelConfig& cfg) {
  std::vector<double> v{static_cast<double>(cfg.input_dim),
                        static_cast<double>(cfg.num_classes),
                        static_cast<double>(cfg.num_activities),
                        static_cast<double>(cfg.kernel),
                        static_cast<double>(cfg.depth),
                        cfg.upsample_mode == ops::UpsampleMode::linear ? 0.0 : 1.0,
                        cfg.skip_connections ? 1.0 : 0.0,
                        cfg.learned_alpha ? 1.0 : 0.0,
                        static_cast<double>(cfg.activity_hidden),
                        cfg.per_sample_inference ? 1.0 : 0.0};
  append_list(v, cfg.encoder_channels);
  append_list(v, cfg.decoder_channels);
  append_list(v, cfg.tpp_windows);
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

ModelConfig decode_config(const Tensor& t) {
  std::size_t i = 0;
  auto next = [&]() -> std::size_t {
    if (i >= t.size()) throw FormatError("meta.config is truncated");
    const double x = t[i++];
    if (x < 0 || x != static_cast<double>(static_cast<std::size_t>(x))) throw FormatError("meta.config is corrupt");
    return static_cast<std::size_t>(x);
  };
  auto list = [&] {
    std::vector<std::size_t> xs(next());
    for (auto& x : xs) x = next();
    return xs;
  };
  ModelConfig cfg;
  cfg.input_dim = next();
  cfg.num_classes = next();
  cfg.num_activities = next();
  cfg.kernel = next();
  cfg.depth = next();
  cfg.upsample_mode = next() == 0 ? ops::UpsampleMode::linear : ops::UpsampleMode::nearest;
  cfg.skip_connections = next() != 0;
  cfg.learned_alpha = next() != 0;
  cfg.activity_hidden = next();
  cfg.per_sample_inference = next() != 0;
  cfg.encoder_channels = list();
  cfg.decoder_channels = list();
  cfg.tpp_windows = list();
  if (i != t.size()) throw FormatError("meta.config has trailing values");
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("meta.config: ") + e.what());
  }
  return cfg;
}

void save_checkpoint(const std::filesystem::path& path, Model& model) {
  const Tensor config = encode_config(model.config());
  std::vector<std::pair<std::string, const Tensor*>> tensors{{kConfigName, &config}};
  for (auto& [name, t] : model.state()) tensors.emplace_back(name, t);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError(path.string() + ": cannot open for writing");
  os.write("C2FC", 4);
  binary::put_u32(os, kVersion);
  binary::put_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    binary::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    binary::put_u32(os, static_cast<std::uint32_t>(t->ndim()));
    for (auto d : t->shape()) binary::put_u32(os, static_cast<std::uint32_t>(d));
    for (double v : t->data()) binary::put_f32(os, v);
  }
  if (!os) throw FormatError(path.string() + ": write failed");
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  const std::string what = path.string();
  if (!is) throw FormatError(what + ": cannot open");
  binary::expect_magic(is, "C2FC", what);
  const auto version = binary::get_u32(is, what);
  if (version != kVersion) throw FormatError(what + ": unsupported checkpoint version " + std::to_string(version));
  const auto count = binary::get_u32(is, what);

  std::map<std::string, Tensor> stored;
  for (std::uint32_t n = 0; n < count; ++n) {
    const auto len = binary::get_u32(is, what);
    if (len > 4096) throw FormatError(what + ": implausible tensor name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError(what + ": truncated file");
    const auto ndim = binary::get_u32(is, what);
    if (ndim > 8) throw FormatError(what + ": implausible rank for '" + name + "'");
    Shape shape(ndim);
    for (auto& d : shape) d = binary::get_u32(is, what);
    Tensor t(shape);
    for (auto& v : t.data()) v = binary::get_f32(is, what);
    if (!stored.emplace(name, std::move(t)).second) throw FormatError(what + ": duplicate tensor '" + name + "'");
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(what + ": trailing bytes");

  auto cfg_it = stored.find(kConfigName);
  if (cfg_it == stored.end()) throw FormatError(what + ": missing tensor '" + std::string(kConfigName) + "'");
  Model model(decode_config(cfg_it->second), 0);
  stored.erase(cfg_it);

  for (auto& [name, t] : model.state()) {
    auto it = stored.find(name);
    if (it == stored.end()) throw FormatError(what + ": missing tensor '" + name + "'");
    if (!it->second.same_shape(*t)) {
      throw FormatError(what + ": tensor '" + name + "' has shape " + it->second.shape_string() + ", expected " +
                        t->shape_string());
    }
    *t = std::move(it->second);
    stored.erase(it);
  }
  if (!stored.empty()) throw FormatError(what + ": unexpected tensor '" + stored.begin()->first + "'");
  return model;
}

}  // namespace c2f
