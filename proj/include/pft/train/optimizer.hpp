#pragma once

#include <cstdint>
#include <vector>

#include "pft/train/config.hpp"
#include "pft/train/toy_vit.hpp"

namespace pft::train {

// Adam with decoupled weight decay. Moment buffers exist only for tensors
// that were trainable at construction; frozen tensors are never touched.
class AdamW {
 public:
  AdamW(const OptimizerConfig& cfg, const std::vector<Param>& params);

  void step(std::vector<Param>& params, double lr);
  bool has_state(size_t param_index) const { return !m_[param_index].empty(); }
  int64_t steps_taken() const noexcept { return t_; }

 private:
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  int64_t t_ = 0;
};

// Linear warmup to `base_lr` at the last warmup step, then cosine decay
// reaching 0 at step total_steps - 1.
double scheduled_lr(double base_lr, int64_t step, int64_t total_steps, int64_t warmup_steps);

}  // namespace pft::train
