#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "anuw/attention.hpp"
#include "anuw/layers.hpp"
#include "anuw/tensor_archive.hpp"

namespace anuw {

/// Topology of the nested dense-skip network.
struct ModelConfig {
  std::size_t levels = 5;
  std::size_t base_channels = 16;
  std::size_t awca_ratio = 16;
  std::size_t psnl_ratio = 8;
  bool enable_awca = true;
  bool enable_psnl = true;
  CenterDim psnl_center = CenterDim::channel;

  /// base_channels * 2^level.
  std::size_t channels_at(std::size_t level) const { return base_channels << level; }
  /// Spatial sizes must be multiples of this (one halving per level below 0).
  std::size_t size_multiple() const { return std::size_t{1} << (levels - 1); }
  /// L(L-1)/2 - 1 when AWCA is enabled, else 0.
  std::size_t awca_count() const;

  /// Throws ConfigError on an unusable configuration.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Rows of the ablation table. E is D plus soft-label training; the
/// topology of E is identical to D.
enum class Ablation { A, B, C, D, E };

char to_char(Ablation a);
Ablation parse_ablation(std::string_view text);

/// Sets the attention toggles of `cfg` to the given ablation row.
ModelConfig ablation_variant(ModelConfig cfg, Ablation which);

/// Grid position of a node: `level` is the depth (0 = full resolution),
/// `column` the dense-skip column (0 = encoder).
struct GridPos {
  std::size_t level;
  std::size_t column;
  friend bool operator==(const GridPos&, const GridPos&) = default;
};

/// Attention nested U-net: VGG blocks on a nested grid with dense skips,
/// projected residual shortcuts, AWCA after every decoder node except the
/// output node, and a PSNL stage before the single-channel head.
class AnuModel {
 public:
  /// Builds and initializes a model; the same (cfg, seed) always yields the
  /// same parameters, and parameters shared between topologies get equal
  /// initial values.
  AnuModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }

  /// rgb: 3 x H x W with H, W multiples of config().size_multiple().
  /// Returns the 1 x H x W positive depth prediction.
  Var forward(Tape& tape, const Tensor& rgb);

  /// Forward pass without recording gradients.
  Tensor predict(const Tensor& rgb);

  /// All parameters, sorted by name.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter* find_parameter(const std::string& name);
  std::size_t parameter_count() const;
  void zero_grad();

  std::vector<GridPos> awca_sites() const;
  std::size_t maxpool_count() const { return cfg_.levels - 1; }
  std::size_t upsample_stage_count() const { return cfg_.levels - 1; }

  /// Parameters plus "config/*" entries describing the topology.
  TensorArchive save() const;
  static AnuModel load(const TensorArchive& archive);

 private:
  struct Node {
    GridPos pos;
    Conv2d conv1;
    Conv2d conv2;
    Conv2d shortcut;
    std::optional<AwcaParams> awca;
  };

  Node& node(std::size_t level, std::size_t column);
  Var run_node(Node& n, Var input);

  ModelConfig cfg_;
  std::vector<Node> nodes_;
  std::optional<PsnlParams> psnl_;
  Conv2d head_;
};

/// Writes config entries ("config/levels", ...) into `archive`.
void write_config(TensorArchive& archive, const ModelConfig& cfg);
ModelConfig read_config(const TensorArchive& archive);

}  // namespace anuw
