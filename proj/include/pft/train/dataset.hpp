#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pft/checkpoint.hpp"

namespace pft::train {

enum class ShiftMode { Independent, Shared };

// Gaussian class clusters over token sequences. Each class has one center
// per token; the fine-tune task moves every center by shift_magnitude times
// a random direction, drawn per token (Independent) or once per class and
// repeated over tokens (Shared).
struct SyntheticSpec {
  int64_t num_classes = 8;
  int64_t samples_per_class = 50;
  int64_t seq_len = 8;       // tokens per sample
  int64_t feature_dim = 32;  // equals the model width
  double class_center_scale = 1.0;
  double noise_scale = 1.0;
  double shift_magnitude = 0.0;
  ShiftMode shift_mode = ShiftMode::Independent;
  uint64_t seed = 0;
  uint64_t shift_seed = 0;

  bool operator==(const SyntheticSpec&) const = default;
};

nlohmann::json spec_to_json(const SyntheticSpec& spec);
// Missing seq_len/feature_dim/num_classes fall back to the given defaults.
SyntheticSpec spec_from_json(const nlohmann::json& j, int64_t default_classes, int64_t default_seq_len,
                             int64_t default_feature_dim);
void validate(const SyntheticSpec& spec);

struct Split {
  std::vector<float> features;  // count x seq_len x feature_dim
  std::vector<int> labels;
  size_t count() const { return labels.size(); }
};

struct TaskData {
  std::vector<float> centers;  // num_classes x seq_len x feature_dim
  Split train;
  Split val;
};

enum class Task { Pretrain, Finetune };

struct Dataset {
  SyntheticSpec spec;
  TaskData pretrain;
  TaskData finetune;

  const TaskData& task(Task t) const { return t == Task::Pretrain ? pretrain : finetune; }
  size_t sample_size() const { return static_cast<size_t>(spec.seq_len * spec.feature_dim); }
  // Every split and center table as tensors in one container.
  Checkpoint to_checkpoint() const;
  std::string hash() const { return to_checkpoint().content_hash(); }
};

// Deterministic given `spec`; samples with index % 5 == 4 form the val split.
Dataset generate_dataset(const SyntheticSpec& spec);

}  // namespace pft::train
