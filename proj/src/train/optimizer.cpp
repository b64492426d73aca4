#include "pft/train/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "pft/error.hpp"

namespace pft::train {

AdamW::AdamW(const OptimizerConfig& cfg, const std::vector<Param>& params)
    : cfg_(cfg), m_(params.size()), v_(params.size()) {
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    m_[i].assign(params[i].value.size(), 0.0);
    v_[i].assign(params[i].value.size(), 0.0);
  }
}

void AdamW::step(std::vector<Param>& params, double lr) {
  if (params.size() != m_.size()) fail(ErrorKind::DimensionMismatch, "optimizer built for a different parameter list");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    if (m_[i].empty()) continue;
    Param& p = params[i];
    const double decay = p.decays() ? 1.0 - lr * cfg_.weight_decay : 1.0;
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g;
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g * g;
      const double update = (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg_.epsilon);
      p.value[k] = p.value[k] * decay - lr * update;
    }
  }
}

double scheduled_lr(double base_lr, int64_t step, int64_t total_steps, int64_t warmup_steps) {
  if (total_steps <= 0 || step < 0 || step >= total_steps || warmup_steps < 0 || warmup_steps > total_steps)
    fail(ErrorKind::InvalidValue, "schedule step out of range");
  if (step < warmup_steps) return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  const double progress =
      static_cast<double>(step - warmup_steps + 1) / static_cast<double>(total_steps - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace pft::train
