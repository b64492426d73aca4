#include "pft/angles.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include "pft/error.hpp"
#include "pft/numerics.hpp"
#include "pft/parallel.hpp"

namespace pft {

using nlohmann::json;

const AngleEntry& AngleReport::entry(const LayerId& id) const {
  for (const auto& e : entries)
    if (e.layer_id == id) return e;
  fail(ErrorKind::IncompatibleReports, "layer " + id.str() + " not in report");
}

std::vector<double> AngleReport::angles() const {
  std::vector<double> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.angle);
  return out;
}

namespace {

// Ranks 1..n by descending angle, ties to the smaller index (shallower layer).
void rank_descending(std::vector<AngleEntry*>& members, int AngleEntry::* field) {
  std::vector<size_t> order(members.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return members[a]->angle > members[b]->angle; });
  for (size_t r = 0; r < order.size(); ++r) members[order[r]]->*field = static_cast<int>(r + 1);
}

}  // namespace

void assign_ranks(AngleReport& report) {
  std::sort(report.entries.begin(), report.entries.end(),
            [](const AngleEntry& a, const AngleEntry& b) { return a.layer_id < b.layer_id; });
  std::map<GroupId, std::vector<AngleEntry*>> by_group;
  std::map<LayerCategory, std::vector<AngleEntry*>> by_category;
  for (auto& e : report.entries) {
    by_group[e.group_id].push_back(&e);
    by_category[e.layer_id.category].push_back(&e);
  }
  for (auto& [_, members] : by_group) rank_descending(members, &AngleEntry::rank_in_group);
  for (auto& [_, members] : by_category) rank_descending(members, &AngleEntry::global_rank);
}

AngleReport compute_angles(const Checkpoint& pre, const Checkpoint& ft, const ArchDescriptor& arch) {
  const auto pre_names = pre.names();
  const auto ft_names = ft.names();
  map_tensors(arch, pre_names);
  map_tensors(arch, ft_names);

  std::set<std::string> used;
  for (const auto& layer : arch.layers()) {
    for (const auto& name : layer.tensor_names) {
      if (!pre.contains(name) || !ft.contains(name))
        fail(ErrorKind::IncompatibleCheckpoints, "residual tensor '" + name + "' missing from " +
                                                     (pre.contains(name) ? "fine-tuned" : "pre-trained") +
                                                     " checkpoint");
      const Shape& a = pre.at(name).shape();
      const Shape& b = ft.at(name).shape();
      if (a != b)
        fail(ErrorKind::IncompatibleCheckpoints,
             "residual tensor '" + name + "' shape " + shape_to_string(a) + " vs " + shape_to_string(b));
      if (a != *arch.layer_tensor_shape(name))
        fail(ErrorKind::IncompatibleCheckpoints,
             "residual tensor '" + name + "' shape " + shape_to_string(a) + " does not match " + arch.arch_id());
      used.insert(name);
    }
  }

  AngleReport report;
  report.arch_id = arch.arch_id();
  report.provenance.pretrained_hash = pre.content_hash();
  report.provenance.finetuned_hash = ft.content_hash();
  std::set<std::string> excluded;
  for (const auto& n : pre_names)
    if (!used.count(n)) excluded.insert(n);
  for (const auto& n : ft_names)
    if (!used.count(n)) excluded.insert(n);
  report.provenance.excluded_tensors.assign(excluded.begin(), excluded.end());

  const auto& layers = arch.layers();
  report.entries.resize(layers.size());
  parallel_for(layers.size(), [&](size_t i) {
    AngleAccumulator acc;
    for (const auto& name : layers[i].tensor_names) acc.add(pre.at(name).data(), ft.at(name).data());
    report.entries[i] = AngleEntry{layers[i].id, GroupId{layers[i].id.stage, layers[i].id.category}, acc.angle(), 0, 0};
  });

  AngleAccumulator whole;
  for (const auto& layer : layers)
    for (const auto& name : layer.tensor_names) whole.add(pre.at(name).data(), ft.at(name).data());
  report.whole_model_angle = layers.empty() ? 0.0 : whole.angle();

  assign_ranks(report);
  return report;
}

ConsistencyMatrix rank_consistency(const std::vector<AngleReport>& reports, std::vector<std::string> report_ids) {
  if (reports.size() < 2) fail(ErrorKind::IncompatibleReports, "rank consistency needs at least two reports");
  if (report_ids.empty())
    for (size_t i = 0; i < reports.size(); ++i) report_ids.push_back("r" + std::to_string(i));
  if (report_ids.size() != reports.size()) fail(ErrorKind::DimensionMismatch, "one id per report required");

  const AngleReport& first = reports.front();
  for (const auto& r : reports) {
    if (r.arch_id != first.arch_id)
      fail(ErrorKind::IncompatibleReports, "mixed architectures: " + first.arch_id + " and " + r.arch_id);
    if (r.entries.size() != first.entries.size() ||
        !std::equal(r.entries.begin(), r.entries.end(), first.entries.begin(),
                    [](const AngleEntry& a, const AngleEntry& b) { return a.layer_id == b.layer_id; }))
      fail(ErrorKind::IncompatibleReports, "reports cover different layers");
  }

  const size_t n = reports.size();
  std::vector<std::vector<double>> angles;
  for (const auto& r : reports) angles.push_back(r.angles());

  ConsistencyMatrix m;
  m.report_ids = std::move(report_ids);
  m.tau.assign(n, std::vector<double>(n, 1.0));
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const double t = kendall_tau(angles[i], angles[j]);
      m.tau[i][j] = m.tau[j][i] = t;
      sum += t;
    }
  }
  m.mean_tau = sum / static_cast<double>(n * (n - 1) / 2);
  return m;
}

std::vector<GroupRankTable> group_rank_table(const AngleReport& report) {
  std::map<GroupId, GroupRankTable> tables;
  for (const auto& e : report.entries) {
    auto& t = tables[e.group_id];
    t.group_id = e.group_id;
    t.rows.push_back({e.layer_id, e.angle, e.rank_in_group});
  }
  std::vector<GroupRankTable> out;
  for (auto& [_, t] : tables) {
    std::sort(t.rows.begin(), t.rows.end(),
              [](const GroupRankRow& a, const GroupRankRow& b) { return a.layer_id < b.layer_id; });
    out.push_back(std::move(t));
  }
  return out;
}

std::string render_rank_table(const AngleReport& report) {
  const auto tables = group_rank_table(report);
  size_t depth = 0;
  for (const auto& t : tables) depth = std::max(depth, t.rows.size());
  std::string out = report.arch_id + "  whole-model angle " + std::to_string(report.whole_model_angle) + " rad\n";
  char cell[64];
  out += "depth";
  for (const auto& t : tables) {
    std::snprintf(cell, sizeof cell, " | %-18s", t.group_id.str().c_str());
    out += cell;
  }
  out += "\n";
  for (size_t row = 0; row < depth; ++row) {
    std::snprintf(cell, sizeof cell, "%5zu", row);
    out += cell;
    for (const auto& t : tables) {
      if (row < t.rows.size()) {
        std::snprintf(cell, sizeof cell, " | %10.6f (#%3d)", t.rows[row].angle, t.rows[row].rank);
      } else {
        std::snprintf(cell, sizeof cell, " | %-18s", "");
      }
      out += cell;
    }
    out += "\n";
  }
  return out;
}

json report_to_json(const AngleReport& report) {
  json entries = json::array();
  for (const auto& e : report.entries) {
    entries.push_back({{"layer_id", e.layer_id.str()},
                       {"group_id", e.group_id.str()},
                       {"angle", e.angle},
                       {"rank_in_group", e.rank_in_group},
                       {"global_rank", e.global_rank}});
  }
  return json{{"arch_id", report.arch_id},
              {"entries", std::move(entries)},
              {"whole_model_angle", report.whole_model_angle},
              {"provenance",
               {{"pretrained_hash", report.provenance.pretrained_hash},
                {"finetuned_hash", report.provenance.finetuned_hash},
                {"excluded_tensors", report.provenance.excluded_tensors}}}};
}

AngleReport report_from_json(const json& j) {
  try {
    AngleReport r;
    r.arch_id = j.at("arch_id").get<std::string>();
    r.whole_model_angle = j.at("whole_model_angle").get<double>();
    for (const auto& e : j.at("entries")) {
      const LayerId id = LayerId::parse(e.at("layer_id").get<std::string>());
      const double angle = e.at("angle").get<double>();
      if (!(angle >= 0.0 && angle <= 3.14159265358979324))
        fail(ErrorKind::FormatError, "angle out of [0, pi] for " + id.str());
      r.entries.push_back({id, GroupId{id.stage, id.category}, angle, 0, 0});
    }
    if (j.contains("provenance")) {
      const json& p = j["provenance"];
      r.provenance.pretrained_hash = p.value("pretrained_hash", "");
      r.provenance.finetuned_hash = p.value("finetuned_hash", "");
      r.provenance.excluded_tensors = p.value("excluded_tensors", std::vector<std::string>{});
    }
    assign_ranks(r);
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::FormatError, std::string("malformed angle report: ") + e.what());
  }
}

json consistency_to_json(const ConsistencyMatrix& m) {
  return json{{"report_ids", m.report_ids}, {"tau", m.tau}, {"mean_tau", m.mean_tau}};
}

}  // namespace pft
