#pragma once

#include <span>
#include <vector>

#include "pft/angles.hpp"
#include "pft/arch.hpp"

namespace pft {

// Starting policy from the per-architecture top-k guidelines: small angles
// for easy tasks, large angles for challenging ones. toy_vit uses one third
// of its depth (the ViT-B/16 ratio of 4 out of 12).
FapftPolicy default_policy(const ArchDescriptor& arch, Difficulty difficulty);

// Throws InvalidPolicy when the policy does not fit the architecture.
void validate_policy(const ArchDescriptor& arch, const FapftPolicy& policy);

// Selects, inside every homogeneous group of stage s, the topk_per_stage[s]
// layers with the largest (or smallest) angles; ties favour shallower layers.
FreezePlan plan_fapft(const AngleReport& report, const ArchDescriptor& arch, const FapftPolicy& policy);

std::vector<FreezePlan> plan_series(const AngleReport& report, const ArchDescriptor& arch, Magnitude magnitude,
                                    std::span<const std::vector<int>> topk_values);

}  // namespace pft
