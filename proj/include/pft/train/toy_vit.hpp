#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pft/arch.hpp"
#include "pft/checkpoint.hpp"
#include "pft/train/dataset.hpp"

namespace pft::train {

struct Param {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool trainable = true;

  // Weight decay applies to matrices and embeddings only.
  bool decays() const { return shape.size() > 1; }
};

// Pre-norm transformer over token sequences: linear patch embedding, class
// token, learned positional embedding, `depth` blocks of (norm + multi-head
// self-attention) and (norm + GELU MLP) residual units, final norm, and a
// linear head on the class token. Tensor names follow the toy_vit descriptor.
//
// Arithmetic is 64-bit throughout. Training keeps parameters representable
// in 32 bits by calling round_to_storage() after every update.
class ToyVit {
 public:
  ToyVit(const ToyDims& dims, int64_t num_classes);

  const ToyDims& dims() const noexcept { return dims_; }
  int64_t num_classes() const noexcept { return num_classes_; }
  const ArchDescriptor& arch() const noexcept { return arch_; }

  std::vector<Param>& params() noexcept { return params_; }
  const std::vector<Param>& params() const noexcept { return params_; }
  Param& param(std::string_view name);
  const Param& param(std::string_view name) const;

  // Truncated-normal weights and embeddings, unit norm gains, zero biases.
  void init_fresh(uint64_t seed, double std = 0.02);
  // Truncated-normal head weight, zero head bias.
  void init_head(uint64_t seed, double std = 0.02);
  // Copies every tensor of `ckpt`; shapes must match exactly. Tensors named
  // in `skip` are left untouched.
  void load(const Checkpoint& ckpt, const std::set<std::string>& skip = {});
  // Marks exactly `names` trainable. Empty set freezes everything.
  void set_trainable(const std::set<std::string>& names);
  void set_all_trainable();

  void round_to_storage();
  void zero_grad();

  // Mean cross-entropy over `n` samples of seq_len x feature_dim features.
  // With `backward`, adds d(loss)/d(param) into the grad of every trainable
  // parameter.
  double loss(std::span<const float> features, std::span<const int> labels, bool backward);
  std::vector<double> logits(std::span<const float> features) const;
  std::vector<int> predict(std::span<const float> features) const;
  double accuracy(const Split& split) const;

  // Parameters at storage precision with arch metadata.
  Checkpoint to_checkpoint() const;

 private:
  struct BlockIndex {
    size_t n1w, n1b, qkvw, qkvb, projw, projb, n2w, n2b, fc1w, fc1b, fc2w, fc2b;
  };
  struct SampleCache;

  void forward_sample(const float* x, SampleCache& c) const;
  void backward_sample(const SampleCache& c, const std::vector<double>& dlogits);
  size_t index_of(std::string_view name) const;

  ToyDims dims_;
  int64_t num_classes_;
  ArchDescriptor arch_;
  std::vector<Param> params_;
  std::vector<BlockIndex> blocks_;
  size_t patch_w_, patch_b_, cls_, pos_, norm_w_, norm_b_, head_w_, head_b_;
};

}  // namespace pft::train
