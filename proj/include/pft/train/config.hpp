#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "pft/arch.hpp"
#include "pft/train/dataset.hpp"

namespace pft::train {

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.05;

  bool operator==(const OptimizerConfig&) const = default;
};

struct ScheduleConfig {
  int epochs = 10;
  int warmup_epochs = 1;  // defaults to 10% of epochs when absent from JSON
  int batch_size = 32;
  int pretrain_epochs = 20;  // pipeline pre-training; defaults to 2 x epochs when absent from JSON

  bool operator==(const ScheduleConfig&) const = default;
};

struct TrainConfig {
  ToyDims dims;
  int64_t num_classes = 8;
  OptimizerConfig optimizer;
  ScheduleConfig schedule;
  uint64_t seed = 0;
  SyntheticSpec dataset;
  Task task = Task::Finetune;
  bool reinit_head = false;  // the head is always re-initialized when its shape changes
  std::optional<FreezePlan> freeze;
};

// Throws InvalidValue on inconsistent settings.
void validate(const TrainConfig& cfg);

nlohmann::json config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const nlohmann::json& j);
TrainConfig load_config(const std::filesystem::path& path);

// SHA-256 of the canonical JSON form (defaults filled in).
std::string config_hash(const TrainConfig& cfg);

}  // namespace pft::train
