#include "anuw/network.hpp"

#include <algorithm>
#include <string>

namespace anuw {

std::size_t ModelConfig::awca_count() const {
  if (!enable_awca) return 0;
  return levels * (levels - 1) / 2 - 1;
}

void ModelConfig::validate() const {
  if (levels < 2) throw ConfigError("levels must be at least 2, got " + std::to_string(levels));
  if (levels > 12) throw ConfigError("levels above 12 are not supported");
  if (base_channels == 0) throw ConfigError("base_channels must be positive");
  if (awca_ratio == 0 || psnl_ratio == 0) throw ConfigError("reduction ratios must be positive");
  for (std::size_t i = 0; i < levels; ++i) {
    if (enable_awca) (void)reduced_channels(channels_at(i), awca_ratio);
  }
  if (enable_psnl) (void)reduced_channels(channels_at(0), psnl_ratio);
}

char to_char(Ablation a) { return static_cast<char>('A' + static_cast<int>(a)); }

Ablation parse_ablation(std::string_view text) {
  if (text.size() == 1 && text[0] >= 'A' && text[0] <= 'E') {
    return static_cast<Ablation>(text[0] - 'A');
  }
  if (text.size() == 1 && text[0] >= 'a' && text[0] <= 'e') {
    return static_cast<Ablation>(text[0] - 'a');
  }
  throw ConfigError("unknown ablation '" + std::string(text) + "' (expected A-E)");
}

ModelConfig ablation_variant(ModelConfig cfg, Ablation which) {
  switch (which) {
    case Ablation::A: cfg.enable_awca = false; cfg.enable_psnl = false; break;
    case Ablation::B: cfg.enable_awca = true;  cfg.enable_psnl = false; break;
    case Ablation::C: cfg.enable_awca = false; cfg.enable_psnl = true;  break;
    case Ablation::D:
    case Ablation::E: cfg.enable_awca = true;  cfg.enable_psnl = true;  break;
  }
  return cfg;
}

namespace {

std::string node_prefix(std::size_t level, std::size_t column) {
  return "node" + std::to_string(level) + "_" + std::to_string(column);
}

}  // namespace

AnuModel::AnuModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t L = cfg_.levels;
  for (std::size_t j = 0; j < L; ++j) {
    for (std::size_t i = 0; i + j < L; ++i) {
      std::size_t in = 0;
      if (j == 0) {
        in = i == 0 ? 3 : cfg_.channels_at(i - 1);
      } else {
        in = j * cfg_.channels_at(i) + cfg_.channels_at(i + 1);
      }
      const std::size_t out = cfg_.channels_at(i);
      const std::string p = node_prefix(i, j);
      Node n{GridPos{i, j}, Conv2d(p + "/conv1", in, out, 3, 1),
             Conv2d(p + "/conv2", out, out, 3, 1), Conv2d(p + "/shortcut", in, out, 1),
             std::nullopt};
      const bool output_node = (i == 0 && j == L - 1);
      if (cfg_.enable_awca && j >= 1 && !output_node) {
        n.awca.emplace(p + "/awca", out, cfg_.awca_ratio);
      }
      n.conv1.init_he(seed);
      n.conv2.init_he(seed);
      n.shortcut.init_he(seed);
      if (n.awca) n.awca->init(seed);
      nodes_.push_back(std::move(n));
    }
  }
  if (cfg_.enable_psnl) {
    psnl_.emplace("psnl", cfg_.channels_at(0), cfg_.psnl_ratio, cfg_.psnl_center);
    psnl_->init(seed);
  }
  head_ = Conv2d("head", cfg_.channels_at(0), 1, 1);
  head_.init_he(seed);
}

AnuModel::Node& AnuModel::node(std::size_t level, std::size_t column) {
  const std::size_t L = cfg_.levels;
  std::size_t idx = 0;
  for (std::size_t c = 0; c < column; ++c) idx += L - c;
  return nodes_[idx + level];
}

Var AnuModel::run_node(Node& n, Var input) {
  Var block = relu(n.conv2(relu(n.conv1(input))));
  return add(block, n.shortcut(input));
}

Var AnuModel::forward(Tape& tape, const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) {
    throw ShapeError("forward: expected a 3 x H x W image, got " + to_string(rgb.shape()));
  }
  const std::size_t mult = cfg_.size_multiple();
  if (rgb.dim(1) % mult != 0 || rgb.dim(2) % mult != 0 || rgb.dim(1) == 0 || rgb.dim(2) == 0) {
    throw ShapeError("forward: height and width must be positive multiples of " +
                     std::to_string(mult) + " for a " + std::to_string(cfg_.levels) +
                     "-level model, got " + to_string(rgb.shape()));
  }
  const std::size_t L = cfg_.levels;
  std::vector<Var> out(nodes_.size());
  auto idx = [L](std::size_t level, std::size_t column) {
    std::size_t k = 0;
    for (std::size_t c = 0; c < column; ++c) k += L - c;
    return k + level;
  };

  Var image = tape.constant(rgb);
  for (std::size_t j = 0; j < L; ++j) {
    for (std::size_t i = 0; i + j < L; ++i) {
      Var input;
      if (j == 0) {
        input = i == 0 ? image : maxpool2(out[idx(i - 1, 0)]);
      } else {
        std::vector<Var> parts;
        for (std::size_t c = 0; c < j; ++c) parts.push_back(out[idx(i, c)]);
        parts.push_back(upsample2(out[idx(i + 1, j - 1)]));
        input = concat_channels(parts);
      }
      Node& n = node(i, j);
      Var x = run_node(n, input);
      if (n.awca) x = awca_forward(x, *n.awca);
      out[idx(i, j)] = x;
    }
  }
  Var top = out[idx(0, L - 1)];
  if (psnl_) top = psnl_forward(top, *psnl_);
  return softplus(head_(top));
}

Tensor AnuModel::predict(const Tensor& rgb) {
  Tape tape(Tape::Mode::inference);
  return forward(tape, rgb).value();
}

std::vector<Parameter*> AnuModel::parameters() {
  std::vector<Parameter*> ps;
  for (auto& n : nodes_) {
    n.conv1.collect(ps);
    n.conv2.collect(ps);
    n.shortcut.collect(ps);
    if (n.awca) n.awca->collect(ps);
  }
  if (psnl_) psnl_->collect(ps);
  head_.collect(ps);
  std::sort(ps.begin(), ps.end(),
            [](const Parameter* a, const Parameter* b) { return a->name() < b->name(); });
  return ps;
}

std::vector<const Parameter*> AnuModel::parameters() const {
  auto ps = const_cast<AnuModel*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

Parameter* AnuModel::find_parameter(const std::string& name) {
  for (Parameter* p : parameters())
    if (p->name() == name) return p;
  return nullptr;
}

std::size_t AnuModel::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->value().size();
  return n;
}

void AnuModel::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

std::vector<GridPos> AnuModel::awca_sites() const {
  std::vector<GridPos> sites;
  for (const auto& n : nodes_)
    if (n.awca) sites.push_back(n.pos);
  return sites;
}

void write_config(TensorArchive& archive, const ModelConfig& cfg) {
  auto put = [&](const char* key, double v) {
    archive.set(std::string("config/") + key, Tensor::scalar(v));
  };
  put("levels", static_cast<double>(cfg.levels));
  put("base_channels", static_cast<double>(cfg.base_channels));
  put("awca_ratio", static_cast<double>(cfg.awca_ratio));
  put("psnl_ratio", static_cast<double>(cfg.psnl_ratio));
  put("enable_awca", cfg.enable_awca ? 1.0 : 0.0);
  put("enable_psnl", cfg.enable_psnl ? 1.0 : 0.0);
  put("psnl_center_spatial", cfg.psnl_center == CenterDim::spatial ? 1.0 : 0.0);
}

ModelConfig read_config(const TensorArchive& archive) {
  auto get = [&](const char* key) { return archive.scalar(std::string("config/") + key); };
  ModelConfig cfg;
  cfg.levels = static_cast<std::size_t>(get("levels"));
  cfg.base_channels = static_cast<std::size_t>(get("base_channels"));
  cfg.awca_ratio = static_cast<std::size_t>(get("awca_ratio"));
  cfg.psnl_ratio = static_cast<std::size_t>(get("psnl_ratio"));
  cfg.enable_awca = get("enable_awca") != 0.0;
  cfg.enable_psnl = get("enable_psnl") != 0.0;
  cfg.psnl_center = get("psnl_center_spatial") != 0.0 ? CenterDim::spatial : CenterDim::channel;
  return cfg;
}

TensorArchive AnuModel::save() const {
  TensorArchive archive;
  write_config(archive, cfg_);
  for (const Parameter* p : parameters()) archive.add(p->name(), p->value());
  return archive;
}

AnuModel AnuModel::load(const TensorArchive& archive) {
  AnuModel model(read_config(archive), 0);
  for (Parameter* p : model.parameters()) {
    const Tensor& t = archive.at(p->name());
    if (t.shape() != p->value().shape()) {
      throw DataError("checkpoint: parameter '" + p->name() + "' has shape " +
                      to_string(t.shape()) + ", model expects " +
                      to_string(p->value().shape()));
    }
    p->value() = t;
    p->zero_grad();
  }
  return model;
}

}  // namespace anuw
