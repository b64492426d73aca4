#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "pft/checkpoint.hpp"
#include "pft/train/config.hpp"
#include "pft/train/dataset.hpp"

namespace pft::train {

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct RunResult {
  Checkpoint final_checkpoint;
  std::vector<EpochMetrics> metrics;
  std::string config_hash;
  double wall_time = 0.0;  // seconds; never written to artifacts
};

// Trains from `init`, or from a fresh initialization when null. The head is
// re-initialized when its shape differs from the config or reinit_head is
// set. Throws IncompatiblePlan, IncompatibleCheckpoints or DivergenceError.
RunResult run_training(const TrainConfig& cfg, const Checkpoint* init = nullptr);
// Same, with a pre-generated dataset matching cfg.dataset.
RunResult run_training(const TrainConfig& cfg, const Checkpoint* init, const Dataset& data);

// Builds a toy model from checkpoint tensors and reports argmax accuracy.
double evaluate_accuracy(const Checkpoint& ckpt, const Split& split);

// One JSON object per epoch, newline-terminated.
std::string metrics_to_jsonl(const std::vector<EpochMetrics>& metrics);
nlohmann::json run_summary(const TrainConfig& cfg, const RunResult& result);

}  // namespace pft::train
