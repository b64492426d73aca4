#pragma once

#include <optional>
#include <vector>

#include "pft/angles.hpp"
#include "pft/arch.hpp"
#include "pft/checkpoint.hpp"
#include "pft/train/config.hpp"
#include "pft/train/trainer.hpp"

namespace pft::train {

// shift_magnitude >= 1 counts as a challenging task.
Difficulty difficulty_for(const SyntheticSpec& spec);

struct PipelineResult {
  AngleReport angle_report;
  FapftPolicy policy;
  FreezePlan plan;
  RunResult full;
  RunResult fapft;
  RunResult linear_probe;
};

// Fresh model trained on the pre-training task for pretrain_epochs.
RunResult run_pretraining(const TrainConfig& cfg);

// Full fine-tune from `pre`, angles between `pre` and the result, the default
// policy for `difficulty` (top-k optionally overridden), angle-guided layer
// selection, then the partial run and a linear-probe baseline with the same
// hyper-parameters. cfg.freeze is ignored.
PipelineResult run_fapft_pipeline(const TrainConfig& cfg, const Checkpoint& pre, Difficulty difficulty,
                                  const std::optional<std::vector<int>>& topk_override = std::nullopt);

// One partial fine-tune per plan, run concurrently, in plan order.
std::vector<RunResult> run_plan_series(const TrainConfig& cfg, const Checkpoint& pre,
                                       const std::vector<FreezePlan>& plans);

}  // namespace pft::train
