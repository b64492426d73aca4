#include "pft/arch.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "pft/checkpoint.hpp"
#include "pft/error.hpp"

namespace pft {

using nlohmann::json;

std::string_view to_string(LayerCategory c) {
  switch (c) {
    case LayerCategory::Attn:
      return "ATTN";
    case LayerCategory::Ffn:
      return "FFN";
    case LayerCategory::Block:
      return "BLOCK";
    case LayerCategory::As:
      return "AS";
    case LayerCategory::Mlp:
      return "MLP";
  }
  return "?";
}

LayerCategory parse_category(std::string_view text) {
  for (auto c : {LayerCategory::Attn, LayerCategory::Ffn, LayerCategory::Block, LayerCategory::As, LayerCategory::Mlp})
    if (to_string(c) == text) return c;
  fail(ErrorKind::FormatError, "unknown layer category '" + std::string(text) + "'");
}

std::string LayerId::str() const {
  return "s" + std::to_string(stage) + ".b" + std::to_string(block) + "." + std::string(to_string(category));
}

LayerId LayerId::parse(std::string_view text) {
  int stage = -1, block = -1, consumed = 0;
  const std::string s(text);
  if (std::sscanf(s.c_str(), "s%d.b%d.%n", &stage, &block, &consumed) != 2 || consumed == 0 || stage < 0 || block < 0)
    fail(ErrorKind::FormatError, "malformed layer id '" + s + "'");
  return LayerId{stage, block, parse_category(std::string_view(s).substr(static_cast<size_t>(consumed)))};
}

std::string GroupId::str() const { return "s" + std::to_string(stage) + "." + std::string(to_string(category)); }

void to_json(json& j, const ToyDims& d) {
  j = json{{"depth", d.depth},     {"model_dim", d.model_dim}, {"heads", d.heads},
           {"ffn_dim", d.ffn_dim}, {"seq_len", d.seq_len},     {"feature_dim", d.feature_dim}};
}

void from_json(const json& j, ToyDims& d) {
  ToyDims defaults;
  d.depth = j.value("depth", defaults.depth);
  d.model_dim = j.value("model_dim", defaults.model_dim);
  d.heads = j.value("heads", defaults.heads);
  d.ffn_dim = j.value("ffn_dim", 4 * d.model_dim);
  d.seq_len = j.value("seq_len", defaults.seq_len);
  d.feature_dim = j.value("feature_dim", d.model_dim);
}

ArchDescriptor::ArchDescriptor(std::string arch_id, std::vector<StageSpec> stages, std::vector<LayerRef> layers,
                               std::vector<TensorSpec> layer_tensors, std::vector<TensorSpec> non_residual,
                               int64_t head_in_features, std::optional<ToyDims> toy)
    : arch_id_(std::move(arch_id)),
      stages_(std::move(stages)),
      layers_(std::move(layers)),
      non_residual_(std::move(non_residual)),
      head_in_features_(head_in_features),
      toy_(std::move(toy)) {
  for (auto& t : layer_tensors) {
    if (!layer_tensor_shapes_.emplace(t.name, t.shape).second)
      throw std::logic_error("duplicate tensor " + t.name + " in " + arch_id_);
  }
  std::sort(layers_.begin(), layers_.end(), [](const LayerRef& a, const LayerRef& b) { return a.id < b.id; });
  for (auto& layer : layers_) {
    std::sort(layer.tensor_names.begin(), layer.tensor_names.end());
    layer.param_count = 0;
    for (const auto& name : layer.tensor_names) {
      auto it = layer_tensor_shapes_.find(name);
      if (it == layer_tensor_shapes_.end()) throw std::logic_error("layer tensor without shape: " + name);
      if (!layer_owner_.emplace(name, layer.id).second) throw std::logic_error("tensor in two layers: " + name);
      layer.param_count += shape_numel(it->second);
    }
    if (layer.tensor_names.empty()) throw std::logic_error("empty layer " + layer.id.str());
  }
  if (layer_owner_.size() != layer_tensor_shapes_.size()) throw std::logic_error("layer tensor not owned by any layer");
  std::sort(non_residual_.begin(), non_residual_.end(),
            [](const TensorSpec& a, const TensorSpec& b) { return a.name < b.name; });
  for (const auto& t : non_residual_) {
    if (layer_tensor_shapes_.count(t.name) || t.name == "head.weight" || t.name == "head.bias")
      throw std::logic_error("tensor claimed twice: " + t.name);
  }

  std::map<GroupId, HomogeneousGroup> grouped;
  for (const auto& layer : layers_) {
    GroupId gid{layer.id.stage, layer.id.category};
    auto& g = grouped[gid];
    g.id = gid;
    if (g.members.empty()) g.member_param_count = layer.param_count;
    if (g.member_param_count != layer.param_count)
      throw std::logic_error("heterogeneous group " + gid.str() + " in " + arch_id_);
    g.members.push_back(layer.id);
  }
  for (auto& [_, g] : grouped) groups_.push_back(std::move(g));
}

const LayerRef& ArchDescriptor::layer(const LayerId& id) const {
  auto it = std::lower_bound(layers_.begin(), layers_.end(), id,
                             [](const LayerRef& l, const LayerId& key) { return l.id < key; });
  if (it == layers_.end() || it->id != id)
    fail(ErrorKind::IncompatiblePlan, "layer " + id.str() + " not in " + arch_id_);
  return *it;
}

bool ArchDescriptor::has_layer(const LayerId& id) const {
  return std::binary_search(layers_.begin(), layers_.end(), LayerRef{id, {}, 0},
                            [](const LayerRef& a, const LayerRef& b) { return a.id < b.id; });
}

const HomogeneousGroup& ArchDescriptor::group(const GroupId& id) const {
  for (const auto& g : groups_)
    if (g.id == id) return g;
  fail(ErrorKind::IncompatiblePlan, "group " + id.str() + " not in " + arch_id_);
}

std::vector<TensorSpec> ArchDescriptor::head(int64_t num_classes) const {
  if (num_classes <= 0) fail(ErrorKind::InvalidValue, "num_classes must be positive");
  return {{"head.bias", {num_classes}}, {"head.weight", {num_classes, head_in_features_}}};
}

std::vector<TensorSpec> ArchDescriptor::all_tensors(int64_t num_classes) const {
  std::vector<TensorSpec> out;
  for (const auto& [name, shape] : layer_tensor_shapes_) out.push_back({name, shape});
  out.insert(out.end(), non_residual_.begin(), non_residual_.end());
  for (auto& t : head(num_classes)) out.push_back(std::move(t));
  std::sort(out.begin(), out.end(), [](const TensorSpec& a, const TensorSpec& b) { return a.name < b.name; });
  return out;
}

std::optional<Shape> ArchDescriptor::layer_tensor_shape(std::string_view name) const {
  auto it = layer_tensor_shapes_.find(name);
  if (it == layer_tensor_shapes_.end()) return std::nullopt;
  return it->second;
}

std::optional<LayerId> ArchDescriptor::layer_owner(std::string_view name) const {
  auto it = layer_owner_.find(name);
  if (it == layer_owner_.end()) return std::nullopt;
  return it->second;
}

int64_t ArchDescriptor::non_residual_param_count() const {
  int64_t n = 0;
  for (const auto& t : non_residual_) n += shape_numel(t.shape);
  return n;
}

int64_t ArchDescriptor::head_param_count(int64_t num_classes) const {
  int64_t n = 0;
  for (const auto& t : head(num_classes)) n += shape_numel(t.shape);
  return n;
}

int64_t ArchDescriptor::residual_param_count() const {
  int64_t n = 0;
  for (const auto& l : layers_) n += l.param_count;
  return n;
}

namespace {

struct Inventory {
  std::vector<LayerRef> layers;
  std::vector<TensorSpec> tensors;

  void add_layer(LayerId id, const std::string& prefix, std::initializer_list<std::pair<const char*, Shape>> specs) {
    LayerRef ref{id, {}, 0};
    for (const auto& [suffix, shape] : specs) {
      std::string name = prefix + suffix;
      ref.tensor_names.push_back(name);
      tensors.push_back({std::move(name), shape});
    }
    layers.push_back(std::move(ref));
  }
};

// Pre-norm block: norm1 + attention, norm2 + two-layer MLP.
void add_transformer_block(Inventory& inv, int stage, int block, const std::string& prefix, int64_t dim,
                           int64_t ffn_dim, std::optional<int64_t> rel_pos_bias_rows, int64_t heads) {
  LayerRef attn{{stage, block, LayerCategory::Attn}, {}, 0};
  std::vector<TensorSpec> attn_specs = {
      {prefix + "norm1.weight", {dim}},
      {prefix + "norm1.bias", {dim}},
      {prefix + "attn.qkv.weight", {3 * dim, dim}},
      {prefix + "attn.qkv.bias", {3 * dim}},
      {prefix + "attn.proj.weight", {dim, dim}},
      {prefix + "attn.proj.bias", {dim}},
  };
  if (rel_pos_bias_rows)
    attn_specs.push_back({prefix + "attn.relative_position_bias_table", {*rel_pos_bias_rows, heads}});
  for (auto& t : attn_specs) {
    attn.tensor_names.push_back(t.name);
    inv.tensors.push_back(std::move(t));
  }
  inv.layers.push_back(std::move(attn));
  inv.add_layer({stage, block, LayerCategory::Ffn}, prefix,
                {{"norm2.weight", {dim}},
                 {"norm2.bias", {dim}},
                 {"mlp.fc1.weight", {ffn_dim, dim}},
                 {"mlp.fc1.bias", {ffn_dim}},
                 {"mlp.fc2.weight", {dim, ffn_dim}},
                 {"mlp.fc2.bias", {dim}}});
}

ArchDescriptor build_vit(std::string arch_id, int depth, int64_t dim, int64_t heads, int64_t ffn_dim, int64_t tokens,
                         Shape patch_weight, std::optional<ToyDims> toy) {
  Inventory inv;
  for (int b = 0; b < depth; ++b)
    add_transformer_block(inv, 0, b, "blocks." + std::to_string(b) + ".", dim, ffn_dim, std::nullopt, heads);
  std::vector<TensorSpec> non_residual = {
      {"patch_embed.proj.weight", std::move(patch_weight)},
      {"patch_embed.proj.bias", {dim}},
      {"cls_token", {1, 1, dim}},
      {"pos_embed", {1, tokens, dim}},
      {"norm.weight", {dim}},
      {"norm.bias", {dim}},
  };
  return ArchDescriptor(std::move(arch_id), {StageSpec{depth, dim, heads, ffn_dim}}, std::move(inv.layers),
                        std::move(inv.tensors), std::move(non_residual), dim, std::move(toy));
}

// Swin-B: embed 128, depths [2,2,18,2], heads [4,8,16,32], window 7, 4x4 patches.
ArchDescriptor build_swin_b() {
  const int depths[] = {2, 2, 18, 2};
  const int64_t heads[] = {4, 8, 16, 32};
  const int64_t embed = 128;
  const int64_t window = 7;
  const int64_t bias_rows = (2 * window - 1) * (2 * window - 1);
  Inventory inv;
  std::vector<StageSpec> stages;
  std::vector<TensorSpec> non_residual = {
      {"patch_embed.proj.weight", {embed, 3, 4, 4}},
      {"patch_embed.proj.bias", {embed}},
      {"patch_embed.norm.weight", {embed}},
      {"patch_embed.norm.bias", {embed}},
  };
  int64_t dim = embed;
  for (int s = 0; s < 4; ++s) {
    stages.push_back({depths[s], dim, heads[s], 4 * dim});
    const std::string stage_prefix = "stages." + std::to_string(s) + ".";
    for (int b = 0; b < depths[s]; ++b)
      add_transformer_block(inv, s, b, stage_prefix + "blocks." + std::to_string(b) + ".", dim, 4 * dim, bias_rows,
                            heads[s]);
    if (s < 3) {
      non_residual.push_back({stage_prefix + "downsample.norm.weight", {4 * dim}});
      non_residual.push_back({stage_prefix + "downsample.norm.bias", {4 * dim}});
      non_residual.push_back({stage_prefix + "downsample.reduction.weight", {2 * dim, 4 * dim}});
      dim *= 2;
    }
  }
  non_residual.push_back({"norm.weight", {dim}});
  non_residual.push_back({"norm.bias", {dim}});
  return ArchDescriptor("swin_b", std::move(stages), std::move(inv.layers), std::move(inv.tensors),
                        std::move(non_residual), dim);
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

ArchDescriptor describe_arch(std::string_view arch_id, const std::optional<ToyDims>& toy) {
  if (arch_id == "toy_vit") {
    const ToyDims d = toy.value_or(ToyDims{});
    if (d.depth < 0 || d.model_dim <= 0 || d.heads <= 0 || d.ffn_dim <= 0 || d.seq_len <= 0 || d.feature_dim <= 0)
      fail(ErrorKind::InvalidValue, "toy_vit dimensions must be positive");
    if (d.model_dim % d.heads != 0) fail(ErrorKind::InvalidValue, "toy_vit model_dim must be divisible by heads");
    return build_vit("toy_vit", d.depth, d.model_dim, d.heads, d.ffn_dim, d.seq_len + 1, {d.model_dim, d.feature_dim},
                     d);
  }
  if (toy) fail(ErrorKind::InvalidValue, "dimension overrides only apply to toy_vit");
  // ViT-B/16 at 224x224: 196 patches + class token.
  if (arch_id == "vit_b16") return build_vit("vit_b16", 12, 768, 12, 3072, 197, {768, 3, 16, 16}, std::nullopt);
  if (arch_id == "swin_b") return build_swin_b();
  fail(ErrorKind::UnknownArchitecture, "unknown architecture '" + std::string(arch_id) + "'");
}

ArchDescriptor describe_arch_for(std::string_view arch_id, const Checkpoint& ckpt) {
  if (arch_id != "toy_vit") return describe_arch(arch_id);
  if (const std::string* dims = ckpt.find_meta(meta::kArchDims)) {
    try {
      return describe_arch(arch_id, json::parse(*dims).get<ToyDims>());
    } catch (const json::exception& e) {
      fail(ErrorKind::FormatError, std::string("bad ") + std::string(meta::kArchDims) + " metadata: " + e.what());
    }
  }
  // Infer from shapes; heads does not affect names or counts.
  ToyDims d;
  d.depth = 0;
  while (ckpt.contains("blocks." + std::to_string(d.depth) + ".norm1.weight")) ++d.depth;
  const Shape& patch = ckpt.at("patch_embed.proj.weight").shape();
  if (patch.size() != 2) fail(ErrorKind::IncompatibleCheckpoints, "toy_vit patch_embed.proj.weight must be 2-D");
  d.model_dim = patch[0];
  d.feature_dim = patch[1];
  d.heads = 1;
  d.seq_len = ckpt.at("pos_embed").shape().at(1) - 1;
  d.ffn_dim = d.depth > 0 ? ckpt.at("blocks.0.mlp.fc1.weight").shape().at(0) : 4 * d.model_dim;
  return describe_arch(arch_id, d);
}

std::vector<TensorAssignment> map_tensors(const ArchDescriptor& arch, std::span<const std::string> names) {
  std::set<std::string, std::less<>> non_residual;
  for (const auto& t : arch.non_residual()) non_residual.insert(t.name);
  std::vector<TensorAssignment> out;
  out.reserve(names.size());
  for (const auto& name : names) {
    if (auto owner = arch.layer_owner(name)) {
      out.push_back({name, TensorRole::Layer, owner});
    } else if (non_residual.count(name)) {
      out.push_back({name, TensorRole::NonResidual, std::nullopt});
    } else if (name == "head.weight" || name == "head.bias") {
      out.push_back({name, TensorRole::Head, std::nullopt});
    } else if (ends_with(name, ".relative_position_index") || ends_with(name, ".attn_mask")) {
      out.push_back({name, TensorRole::Buffer, std::nullopt});
    } else {
      fail(ErrorKind::UnmappedTensor, "tensor '" + name + "' does not match the " + arch.arch_id() + " schema");
    }
  }
  return out;
}

std::string_view to_string(StrategyTag tag) {
  switch (tag) {
    case StrategyTag::A:
      return "A";
    case StrategyTag::B:
      return "B";
    case StrategyTag::C:
      return "C";
    case StrategyTag::D:
      return "D";
    case StrategyTag::E:
      return "E";
    case StrategyTag::F:
      return "F";
    case StrategyTag::G:
      return "G";
    case StrategyTag::H:
      return "H";
    case StrategyTag::I:
      return "I";
    case StrategyTag::Fapft:
      return "FAPFT";
    case StrategyTag::Full:
      return "FULL";
    case StrategyTag::LinearProbe:
      return "LINEAR_PROBE";
  }
  return "?";
}

StrategyTag parse_strategy(std::string_view text) {
  if (text == "attn_only") return StrategyTag::B;
  if (text == "ffn_only") return StrategyTag::C;
  if (text == "full") return StrategyTag::Full;
  if (text == "linear_probe") return StrategyTag::LinearProbe;
  if (text == "fapft") return StrategyTag::Fapft;
  for (auto tag :
       {StrategyTag::A, StrategyTag::B, StrategyTag::C, StrategyTag::D, StrategyTag::E, StrategyTag::F, StrategyTag::G,
        StrategyTag::H, StrategyTag::I, StrategyTag::Fapft, StrategyTag::Full, StrategyTag::LinearProbe})
    if (to_string(tag) == text) return tag;
  fail(ErrorKind::FormatError, "unknown strategy '" + std::string(text) + "'");
}

std::string_view to_string(Magnitude m) { return m == Magnitude::Large ? "large" : "small"; }
std::string_view to_string(Difficulty d) { return d == Difficulty::Easy ? "easy" : "challenging"; }

Magnitude parse_magnitude(std::string_view text) {
  if (text == "large") return Magnitude::Large;
  if (text == "small") return Magnitude::Small;
  fail(ErrorKind::FormatError, "magnitude must be large or small, got '" + std::string(text) + "'");
}

Difficulty parse_difficulty(std::string_view text) {
  if (text == "easy") return Difficulty::Easy;
  if (text == "challenging") return Difficulty::Challenging;
  fail(ErrorKind::FormatError, "difficulty must be easy or challenging, got '" + std::string(text) + "'");
}

bool FreezePlan::is_trainable(const LayerId& id) const {
  return std::binary_search(trainable_layers.begin(), trainable_layers.end(), id);
}

FreezePlan full_plan(const ArchDescriptor& arch) {
  FreezePlan plan{arch.arch_id(), StrategyTag::Full, {}, true, true, std::nullopt};
  for (const auto& l : arch.layers()) plan.trainable_layers.push_back(l.id);
  return plan;
}

FreezePlan linear_probe_plan(const ArchDescriptor& arch) {
  return FreezePlan{arch.arch_id(), StrategyTag::LinearProbe, {}, true, false, std::nullopt};
}

namespace {

std::vector<LayerId> first_half(const std::vector<LayerId>& v) {
  return {v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2)};
}

// Odd counts put the extra layer here.
std::vector<LayerId> last_half(const std::vector<LayerId>& v) {
  return {v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end()};
}

std::vector<LayerId> layers_of(const ArchDescriptor& arch, LayerCategory c) {
  std::vector<LayerId> out;
  for (const auto& l : arch.layers())
    if (l.id.category == c) out.push_back(l.id);
  return out;
}

// Every layer of the selected blocks, where blocks are (stage, block) pairs in depth order.
std::vector<LayerId> layers_of_blocks(const ArchDescriptor& arch, bool first) {
  std::vector<std::pair<int, int>> blocks;
  for (const auto& l : arch.layers()) {
    std::pair<int, int> key{l.id.stage, l.id.block};
    if (blocks.empty() || blocks.back() != key) blocks.push_back(key);
  }
  const size_t split = blocks.size() / 2;
  std::set<std::pair<int, int>> chosen(first ? blocks.begin() : blocks.begin() + static_cast<std::ptrdiff_t>(split),
                                       first ? blocks.begin() + static_cast<std::ptrdiff_t>(split) : blocks.end());
  std::vector<LayerId> out;
  for (const auto& l : arch.layers())
    if (chosen.count({l.id.stage, l.id.block})) out.push_back(l.id);
  return out;
}

}  // namespace

FreezePlan manual_strategy(const ArchDescriptor& arch, StrategyTag tag) {
  FreezePlan plan{arch.arch_id(), tag, {}, true, false, std::nullopt};
  const auto attn = layers_of(arch, LayerCategory::Attn);
  const auto ffn = layers_of(arch, LayerCategory::Ffn);
  switch (tag) {
    case StrategyTag::A:
      plan = full_plan(arch);
      plan.strategy_tag = StrategyTag::A;
      return plan;
    case StrategyTag::B:
      plan.trainable_layers = attn;
      break;
    case StrategyTag::C:
      plan.trainable_layers = ffn;
      break;
    case StrategyTag::D:
      plan.trainable_layers = first_half(attn);
      break;
    case StrategyTag::E:
      plan.trainable_layers = last_half(attn);
      break;
    case StrategyTag::F:
      plan.trainable_layers = first_half(ffn);
      break;
    case StrategyTag::G:
      plan.trainable_layers = last_half(ffn);
      break;
    case StrategyTag::H:
      plan.trainable_layers = layers_of_blocks(arch, true);
      break;
    case StrategyTag::I:
      plan.trainable_layers = layers_of_blocks(arch, false);
      break;
    case StrategyTag::Full:
      return full_plan(arch);
    case StrategyTag::LinearProbe:
      return linear_probe_plan(arch);
    case StrategyTag::Fapft:
      fail(ErrorKind::InvalidPolicy, "FAPFT plans come from an angle report, not a manual strategy");
  }
  return plan;
}

int64_t param_count(const ArchDescriptor& arch, const FreezePlan& plan, int64_t num_classes) {
  if (num_classes <= 0)
    fail(ErrorKind::InvalidValue, "num_classes must be positive, got " + std::to_string(num_classes));
  if (plan.arch_id != arch.arch_id())
    fail(ErrorKind::IncompatiblePlan, "plan for " + plan.arch_id + " applied to " + arch.arch_id());
  int64_t total = 0;
  for (const auto& id : plan.trainable_layers) total += arch.layer(id).param_count;
  if (plan.head_trainable) total += arch.head_param_count(num_classes);
  if (plan.non_residual_trainable) total += arch.non_residual_param_count();
  return total;
}

std::set<std::string> trainable_tensor_names(const ArchDescriptor& arch, const FreezePlan& plan) {
  if (plan.arch_id != arch.arch_id())
    fail(ErrorKind::IncompatiblePlan, "plan for " + plan.arch_id + " applied to " + arch.arch_id());
  std::set<std::string> out;
  for (const auto& id : plan.trainable_layers)
    for (const auto& name : arch.layer(id).tensor_names) out.insert(name);
  if (plan.head_trainable) out.insert({"head.weight", "head.bias"});
  if (plan.non_residual_trainable)
    for (const auto& t : arch.non_residual()) out.insert(t.name);
  return out;
}

std::string format_millions(int64_t count) {
  const int64_t hundredths = (count + 5000) / 10000;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%lld.%02lld", static_cast<long long>(hundredths / 100),
                static_cast<long long>(hundredths % 100));
  return buf;
}

std::string format_soup_millions(std::span<const int64_t> per_run_counts) {
  int64_t hundredths = 0;
  for (int64_t c : per_run_counts) hundredths += (c + 5000) / 10000;
  const int64_t tenths = (hundredths + 5) / 10;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%lld.%lld", static_cast<long long>(tenths / 10), static_cast<long long>(tenths % 10));
  return buf;
}

json plan_to_json(const FreezePlan& plan, const ArchDescriptor& arch, std::span<const int64_t> class_counts) {
  json j;
  j["arch_id"] = plan.arch_id;
  j["strategy_tag"] = std::string(to_string(plan.strategy_tag));
  if (plan.policy) {
    json p{{"magnitude", std::string(to_string(plan.policy->magnitude))},
           {"topk_per_stage", plan.policy->topk_per_stage}};
    if (plan.policy->difficulty) p["difficulty"] = std::string(to_string(*plan.policy->difficulty));
    j["policy"] = std::move(p);
  } else {
    j["policy"] = nullptr;
  }
  json layers = json::array();
  for (const auto& id : plan.trainable_layers) layers.push_back(id.str());
  j["trainable_layers"] = std::move(layers);
  j["head_trainable"] = plan.head_trainable;
  j["non_residual_trainable"] = plan.non_residual_trainable;
  json counts = json::object();
  for (int64_t n : class_counts) counts[std::to_string(n)] = param_count(arch, plan, n);
  j["param_count_by_classes"] = std::move(counts);
  return j;
}

FreezePlan plan_from_json(const json& j) {
  try {
    FreezePlan plan;
    plan.arch_id = j.at("arch_id").get<std::string>();
    plan.strategy_tag = parse_strategy(j.at("strategy_tag").get<std::string>());
    for (const auto& s : j.at("trainable_layers"))
      plan.trainable_layers.push_back(LayerId::parse(s.get<std::string>()));
    std::sort(plan.trainable_layers.begin(), plan.trainable_layers.end());
    if (std::adjacent_find(plan.trainable_layers.begin(), plan.trainable_layers.end()) != plan.trainable_layers.end())
      fail(ErrorKind::FormatError, "duplicate trainable layer in plan");
    plan.head_trainable = j.value("head_trainable", true);
    if (!plan.head_trainable) fail(ErrorKind::FormatError, "head_trainable must be true");
    plan.non_residual_trainable = j.value("non_residual_trainable", false);
    if (j.contains("policy") && !j["policy"].is_null()) {
      const json& p = j["policy"];
      FapftPolicy policy;
      policy.magnitude = parse_magnitude(p.at("magnitude").get<std::string>());
      policy.topk_per_stage = p.at("topk_per_stage").get<std::vector<int>>();
      if (p.contains("difficulty")) policy.difficulty = parse_difficulty(p["difficulty"].get<std::string>());
      plan.policy = std::move(policy);
    }
    return plan;
  } catch (const json::exception& e) {
    fail(ErrorKind::FormatError, std::string("malformed freeze plan: ") + e.what());
  }
}

}  // namespace pft
