#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "pft/arch.hpp"
#include "pft/checkpoint.hpp"

namespace pft {

struct AngleEntry {
  LayerId layer_id;
  GroupId group_id;
  double angle = 0.0;     // radians
  int rank_in_group = 0;  // 1 = largest angle; ties go to the shallower layer
  int global_rank = 0;    // same rule across every layer of the category, all stages
};

struct AngleProvenance {
  std::string pretrained_hash;
  std::string finetuned_hash;
  std::vector<std::string> excluded_tensors;
};

struct AngleReport {
  std::string arch_id;
  std::vector<AngleEntry> entries;  // canonical layer order
  double whole_model_angle = 0.0;
  AngleProvenance provenance;

  const AngleEntry& entry(const LayerId& id) const;
  std::vector<double> angles() const;
};

// Per-layer angle between flattened pre-trained and fine-tuned weights; each
// layer's tensors are concatenated in lexicographic name order. The head and
// non-residual tensors are excluded and recorded in the provenance.
AngleReport compute_angles(const Checkpoint& pre, const Checkpoint& ft, const ArchDescriptor& arch);

// Assigns rank_in_group and global_rank from the angles already present.
void assign_ranks(AngleReport& report);

struct ConsistencyMatrix {
  std::vector<std::string> report_ids;
  std::vector<std::vector<double>> tau;
  double mean_tau = 0.0;
};

// Pairwise Kendall tau-b of layer angles; report_ids default to "r0", "r1", ...
ConsistencyMatrix rank_consistency(const std::vector<AngleReport>& reports, std::vector<std::string> report_ids = {});

struct GroupRankRow {
  LayerId layer_id;
  double angle = 0.0;
  int rank = 0;
};

struct GroupRankTable {
  GroupId group_id;
  std::vector<GroupRankRow> rows;  // depth order
};

std::vector<GroupRankTable> group_rank_table(const AngleReport& report);

// Text table: one column per group, depth increasing downward, rank annotated.
std::string render_rank_table(const AngleReport& report);

nlohmann::json report_to_json(const AngleReport& report);
AngleReport report_from_json(const nlohmann::json& j);
nlohmann::json consistency_to_json(const ConsistencyMatrix& m);

}  // namespace pft
