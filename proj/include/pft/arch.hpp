#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pft/tensor.hpp"

namespace pft {

class Checkpoint;

enum class LayerCategory { Attn, Ffn, Block, As, Mlp };

std::string_view to_string(LayerCategory c);
LayerCategory parse_category(std::string_view text);

// (stage, block, category); ordering is the canonical depth order.
struct LayerId {
  int stage = 0;
  int block = 0;
  LayerCategory category = LayerCategory::Attn;

  auto operator<=>(const LayerId&) const = default;

  // "s{stage}.b{block}.{ATTN|FFN|...}"
  std::string str() const;
  static LayerId parse(std::string_view text);
};

struct GroupId {
  int stage = 0;
  LayerCategory category = LayerCategory::Attn;

  auto operator<=>(const GroupId&) const = default;
  std::string str() const;
};

struct TensorSpec {
  std::string name;
  Shape shape;
};

// One residual-connected unit, including its preceding normalization.
struct LayerRef {
  LayerId id;
  std::vector<std::string> tensor_names;  // lexicographic
  int64_t param_count = 0;
};

struct HomogeneousGroup {
  GroupId id;
  std::vector<LayerId> members;  // depth order
  int64_t member_param_count = 0;
};

struct StageSpec {
  int depth = 0;
  int64_t dim = 0;
  int64_t heads = 0;
  int64_t ffn_dim = 0;
};

// Dimensions of the configurable toy transformer.
struct ToyDims {
  int depth = 4;
  int64_t model_dim = 32;
  int64_t heads = 4;
  int64_t ffn_dim = 128;
  int64_t seq_len = 8;
  int64_t feature_dim = 32;

  bool operator==(const ToyDims&) const = default;
};

void to_json(nlohmann::json& j, const ToyDims& d);
void from_json(const nlohmann::json& j, ToyDims& d);

enum class TensorRole { Layer, NonResidual, Head, Buffer };

struct TensorAssignment {
  std::string name;
  TensorRole role = TensorRole::Layer;
  std::optional<LayerId> layer;
};

class ArchDescriptor {
 public:
  ArchDescriptor(std::string arch_id, std::vector<StageSpec> stages, std::vector<LayerRef> layers,
                 std::vector<TensorSpec> layer_tensors, std::vector<TensorSpec> non_residual, int64_t head_in_features,
                 std::optional<ToyDims> toy = std::nullopt);

  const std::string& arch_id() const noexcept { return arch_id_; }
  const std::vector<StageSpec>& stages() const noexcept { return stages_; }
  const std::vector<LayerRef>& layers() const noexcept { return layers_; }
  const std::vector<HomogeneousGroup>& groups() const noexcept { return groups_; }
  const std::vector<TensorSpec>& non_residual() const noexcept { return non_residual_; }
  const std::optional<ToyDims>& toy_dims() const noexcept { return toy_; }

  const LayerRef& layer(const LayerId& id) const;
  bool has_layer(const LayerId& id) const;
  const HomogeneousGroup& group(const GroupId& id) const;

  std::vector<TensorSpec> head(int64_t num_classes) const;
  // Every parameter tensor for a given head size, sorted by name.
  std::vector<TensorSpec> all_tensors(int64_t num_classes) const;
  std::optional<Shape> layer_tensor_shape(std::string_view name) const;
  std::optional<LayerId> layer_owner(std::string_view name) const;

  int64_t non_residual_param_count() const;
  int64_t head_param_count(int64_t num_classes) const;
  int64_t residual_param_count() const;

 private:
  std::string arch_id_;
  std::vector<StageSpec> stages_;
  std::vector<LayerRef> layers_;
  std::vector<HomogeneousGroup> groups_;
  std::map<std::string, Shape, std::less<>> layer_tensor_shapes_;
  std::map<std::string, LayerId, std::less<>> layer_owner_;
  std::vector<TensorSpec> non_residual_;
  int64_t head_in_features_ = 0;
  std::optional<ToyDims> toy_;
};

// Known ids: vit_b16, swin_b, toy_vit. Toy dims only apply to toy_vit.
ArchDescriptor describe_arch(std::string_view arch_id, const std::optional<ToyDims>& toy = std::nullopt);
// Same, reading toy dimensions from checkpoint metadata or tensor shapes.
ArchDescriptor describe_arch_for(std::string_view arch_id, const Checkpoint& ckpt);

// Throws UnmappedTensor naming the first offender.
std::vector<TensorAssignment> map_tensors(const ArchDescriptor& arch, std::span<const std::string> names);

enum class StrategyTag { A, B, C, D, E, F, G, H, I, Fapft, Full, LinearProbe };

std::string_view to_string(StrategyTag tag);
StrategyTag parse_strategy(std::string_view text);  // also accepts attn_only, ffn_only, full, linear_probe

enum class Magnitude { Large, Small };
enum class Difficulty { Easy, Challenging };

std::string_view to_string(Magnitude m);
std::string_view to_string(Difficulty d);
Magnitude parse_magnitude(std::string_view text);
Difficulty parse_difficulty(std::string_view text);

struct FapftPolicy {
  Magnitude magnitude = Magnitude::Large;
  std::vector<int> topk_per_stage;
  std::optional<Difficulty> difficulty;

  bool operator==(const FapftPolicy&) const = default;
};

struct FreezePlan {
  std::string arch_id;
  StrategyTag strategy_tag = StrategyTag::LinearProbe;
  std::vector<LayerId> trainable_layers;  // canonical order, unique
  bool head_trainable = true;
  bool non_residual_trainable = false;
  std::optional<FapftPolicy> policy;

  bool is_trainable(const LayerId& id) const;
  bool operator==(const FreezePlan&) const = default;
};

FreezePlan full_plan(const ArchDescriptor& arch);
FreezePlan linear_probe_plan(const ArchDescriptor& arch);
FreezePlan manual_strategy(const ArchDescriptor& arch, StrategyTag tag);

// Exact trainable-parameter total.
int64_t param_count(const ArchDescriptor& arch, const FreezePlan& plan, int64_t num_classes);

// Names of tensors that receive updates under `plan`.
std::set<std::string> trainable_tensor_names(const ArchDescriptor& arch, const FreezePlan& plan);

// Millions at two decimals, half-up on the exact integer: 29135848 -> "29.14".
std::string format_millions(int64_t count);
// Sum of per-run two-decimal figures, shown at one decimal: 5 x 86.57 -> "432.9".
std::string format_soup_millions(std::span<const int64_t> per_run_counts);

nlohmann::json plan_to_json(const FreezePlan& plan, const ArchDescriptor& arch, std::span<const int64_t> class_counts);
FreezePlan plan_from_json(const nlohmann::json& j);

}  // namespace pft
