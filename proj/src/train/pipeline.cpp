#include "pft/train/pipeline.hpp"

#include "pft/parallel.hpp"
#include "pft/planner.hpp"

namespace pft::train {

Difficulty difficulty_for(const SyntheticSpec& spec) {
  return spec.shift_magnitude >= 1.0 ? Difficulty::Challenging : Difficulty::Easy;
}

RunResult run_pretraining(const TrainConfig& cfg) {
  TrainConfig p = cfg;
  p.task = Task::Pretrain;
  p.freeze.reset();
  p.reinit_head = false;
  p.schedule.epochs = cfg.schedule.pretrain_epochs;
  p.schedule.warmup_epochs = cfg.schedule.pretrain_epochs / 10;
  return run_training(p, nullptr);
}

PipelineResult run_fapft_pipeline(const TrainConfig& cfg, const Checkpoint& pre, Difficulty difficulty,
                                  const std::optional<std::vector<int>>& topk_override) {
  validate(cfg);
  const Dataset data = generate_dataset(cfg.dataset);
  const ArchDescriptor arch = describe_arch("toy_vit", cfg.dims);

  PipelineResult out;
  TrainConfig full_cfg = cfg;
  full_cfg.freeze.reset();
  out.full = run_training(full_cfg, &pre, data);

  out.angle_report = compute_angles(pre, out.full.final_checkpoint, arch);
  out.policy = default_policy(arch, difficulty);
  if (topk_override) out.policy.topk_per_stage = *topk_override;
  out.plan = plan_fapft(out.angle_report, arch, out.policy);

  TrainConfig partial_cfg = cfg;
  partial_cfg.freeze = out.plan;
  TrainConfig probe_cfg = cfg;
  probe_cfg.freeze = linear_probe_plan(arch);
  parallel_for(2, [&](size_t i) {
    if (i == 0)
      out.fapft = run_training(partial_cfg, &pre, data);
    else
      out.linear_probe = run_training(probe_cfg, &pre, data);
  });
  return out;
}

std::vector<RunResult> run_plan_series(const TrainConfig& cfg, const Checkpoint& pre,
                                       const std::vector<FreezePlan>& plans) {
  validate(cfg);
  const Dataset data = generate_dataset(cfg.dataset);
  std::vector<RunResult> out(plans.size());
  parallel_for(plans.size(), [&](size_t i) {
    TrainConfig c = cfg;
    c.freeze = plans[i];
    out[i] = run_training(c, &pre, data);
  });
  return out;
}

}  // namespace pft::train
