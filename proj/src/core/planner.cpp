#include "pft/planner.hpp"

#include <algorithm>
#include <numeric>

#include "pft/error.hpp"

namespace pft {

FapftPolicy default_policy(const ArchDescriptor& arch, Difficulty difficulty) {
  const bool easy = difficulty == Difficulty::Easy;
  FapftPolicy policy;
  policy.magnitude = easy ? Magnitude::Small : Magnitude::Large;
  policy.difficulty = difficulty;
  if (arch.arch_id() == "vit_b16") {
    policy.topk_per_stage = {4};
  } else if (arch.arch_id() == "swin_b") {
    policy.topk_per_stage = easy ? std::vector<int>{2, 2, 6, 1} : std::vector<int>{0, 0, 6, 2};
  } else if (arch.arch_id() == "toy_vit") {
    const int depth = arch.stages().front().depth;
    policy.topk_per_stage = {std::min(depth, std::max(1, (depth + 1) / 3))};
  } else {
    fail(ErrorKind::NoGuidelines, "no top-k guidelines for " + arch.arch_id() + "; supply an explicit policy");
  }
  return policy;
}

void validate_policy(const ArchDescriptor& arch, const FapftPolicy& policy) {
  const auto& stages = arch.stages();
  if (policy.topk_per_stage.size() != stages.size())
    fail(ErrorKind::InvalidPolicy, arch.arch_id() + " has " + std::to_string(stages.size()) +
                                       " stage(s), policy gives " + std::to_string(policy.topk_per_stage.size()) +
                                       " top-k value(s)");
  for (size_t s = 0; s < stages.size(); ++s) {
    const int k = policy.topk_per_stage[s];
    if (k < 0 || k > stages[s].depth)
      fail(ErrorKind::InvalidPolicy, "top-k " + std::to_string(k) + " for stage " + std::to_string(s) +
                                         " outside [0, " + std::to_string(stages[s].depth) + "]");
  }
}

FreezePlan plan_fapft(const AngleReport& report, const ArchDescriptor& arch, const FapftPolicy& policy) {
  if (report.arch_id != arch.arch_id())
    fail(ErrorKind::IncompatibleReports, "report for " + report.arch_id + " used with " + arch.arch_id());
  if (report.entries.size() != arch.layers().size())
    fail(ErrorKind::IncompatibleReports, "report has " + std::to_string(report.entries.size()) + " layers, " +
                                             arch.arch_id() + " has " + std::to_string(arch.layers().size()));
  validate_policy(arch, policy);

  FreezePlan plan{arch.arch_id(), StrategyTag::Fapft, {}, true, false, policy};
  for (const auto& group : arch.groups()) {
    const auto k = static_cast<size_t>(policy.topk_per_stage[static_cast<size_t>(group.id.stage)]);
    if (k > group.members.size())
      fail(ErrorKind::InvalidPolicy, "top-k " + std::to_string(k) + " exceeds group " + group.id.str() + " of size " +
                                         std::to_string(group.members.size()));
    std::vector<double> angles;
    for (const auto& id : group.members) angles.push_back(report.entry(id).angle);
    std::vector<size_t> order(group.members.size());
    std::iota(order.begin(), order.end(), size_t{0});
    // members are in depth order, so a stable sort keeps shallower layers first on ties
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return policy.magnitude == Magnitude::Large ? angles[a] > angles[b] : angles[a] < angles[b];
    });
    for (size_t i = 0; i < k; ++i) plan.trainable_layers.push_back(group.members[order[i]]);
  }
  std::sort(plan.trainable_layers.begin(), plan.trainable_layers.end());
  return plan;
}

std::vector<FreezePlan> plan_series(const AngleReport& report, const ArchDescriptor& arch, Magnitude magnitude,
                                    std::span<const std::vector<int>> topk_values) {
  std::vector<FreezePlan> plans;
  for (const auto& topk : topk_values) plans.push_back(plan_fapft(report, arch, FapftPolicy{magnitude, topk, {}}));
  return plans;
}

}  // namespace pft
