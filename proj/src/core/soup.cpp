#include "pft/soup.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "pft/error.hpp"
#include "pft/numerics.hpp"

namespace pft {

using nlohmann::json;

SoupRecipe recipe_from_json(const json& j, const std::filesystem::path& base_dir) {
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  try {
    SoupRecipe recipe;
    for (const auto& in : j.at("inputs")) {
      SoupInput input;
      input.path = resolve(in.at("path").get<std::string>());
      input.weight = in.value("weight", 1.0);
      if (!(input.weight > 0.0)) fail(ErrorKind::InvalidValue, "soup weights must be positive");
      if (in.contains("plan") && !in["plan"].is_null()) {
        const json& p = in["plan"];
        if (p.is_string()) {
          std::ifstream f(resolve(p.get<std::string>()));
          if (!f) fail(ErrorKind::IoError, "cannot open plan " + p.get<std::string>());
          input.plan = plan_from_json(json::parse(f));
        } else {
          input.plan = plan_from_json(p);
        }
      }
      recipe.inputs.push_back(std::move(input));
    }
    const std::string mode = j.value("mode", "uniform");
    if (mode == "uniform") {
      recipe.mode = SoupMode::Uniform;
    } else if (mode == "greedy") {
      recipe.mode = SoupMode::Greedy;
    } else {
      fail(ErrorKind::FormatError, "soup mode must be uniform or greedy, got '" + mode + "'");
    }
    if (j.contains("base") && !j["base"].is_null()) recipe.base = resolve(j["base"].get<std::string>());
    if (j.contains("eval_config") && !j["eval_config"].is_null())
      recipe.eval_config = resolve(j["eval_config"].get<std::string>());
    if (j.contains("num_classes")) recipe.num_classes = j["num_classes"].get<int64_t>();
    if (recipe.inputs.empty()) fail(ErrorKind::EmptyInput, "soup recipe has no inputs");
    return recipe;
  } catch (const json::exception& e) {
    fail(ErrorKind::FormatError, std::string("malformed soup recipe: ") + e.what());
  }
}

Checkpoint uniform_soup(std::span<const Checkpoint> inputs, std::span<const double> weights) {
  if (inputs.empty()) fail(ErrorKind::EmptyInput, "soup of zero checkpoints");
  if (!weights.empty() && weights.size() != inputs.size())
    fail(ErrorKind::DimensionMismatch, "one weight per soup input required");
  const Checkpoint& first = inputs.front();
  for (size_t k = 1; k < inputs.size(); ++k) {
    const auto diff = diff_checkpoints(first, inputs[k]);
    if (!diff.only_in_a.empty() || !diff.only_in_b.empty())
      fail(ErrorKind::IncompatibleCheckpoints,
           "soup input " + std::to_string(k) + " has a different tensor set (e.g. '" +
               (diff.only_in_a.empty() ? diff.only_in_b.front() : diff.only_in_a.front()) + "')");
    if (!diff.shape_mismatch.empty())
      fail(ErrorKind::IncompatibleCheckpoints, "soup input " + std::to_string(k) + " tensor '" +
                                                   diff.shape_mismatch.front().name + "' has shape " +
                                                   shape_to_string(diff.shape_mismatch.front().shape_b) + " vs " +
                                                   shape_to_string(diff.shape_mismatch.front().shape_a));
  }

  Checkpoint soup;
  std::vector<Tensor> column;
  column.reserve(inputs.size());
  for (const auto& [name, _] : first.tensors()) {
    column.clear();
    for (const auto& c : inputs) column.push_back(c.at(name));
    soup.put(name, mean_stack(column, weights));
  }

  std::string hashes, weight_list;
  for (size_t k = 0; k < inputs.size(); ++k) {
    if (k) {
      hashes += ",";
      weight_list += ",";
    }
    hashes += inputs[k].content_hash();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", weights.empty() ? 1.0 : weights[k]);
    weight_list += buf;
  }
  soup.set_meta(std::string(meta::kProducer), "pft-soup");
  soup.set_meta("pft.soup.inputs", hashes);
  soup.set_meta("pft.soup.weights", weight_list);
  const std::string* arch = first.find_meta(meta::kArchId);
  if (arch && std::all_of(inputs.begin(), inputs.end(), [&](const Checkpoint& c) {
        const std::string* a = c.find_meta(meta::kArchId);
        return a && *a == *arch;
      })) {
    soup.set_meta(std::string(meta::kArchId), *arch);
    if (const std::string* dims = first.find_meta(meta::kArchDims)) soup.set_meta(std::string(meta::kArchDims), *dims);
  }
  return soup;
}

void check_frozen_consistency(std::span<const Checkpoint> inputs, std::span<const FreezePlan> plans,
                              const Checkpoint& base) {
  if (plans.size() != inputs.size()) fail(ErrorKind::DimensionMismatch, "one plan per soup input required");
  for (size_t k = 0; k < inputs.size(); ++k) {
    const ArchDescriptor arch = describe_arch_for(plans[k].arch_id, base);
    const auto trainable = trainable_tensor_names(arch, plans[k]);
    for (const auto& [name, tensor] : inputs[k].tensors()) {
      if (trainable.count(name)) continue;
      if (!base.contains(name))
        fail(ErrorKind::IncompatibleCheckpoints, "frozen tensor '" + name + "' missing from base checkpoint");
      if (!tensor.bitwise_equal(base.at(name)))
        fail(ErrorKind::IncompatibleCheckpoints, "soup input " + std::to_string(k) + " changed frozen tensor '" + name +
                                                     "' relative to the base checkpoint");
    }
  }
}

Checkpoint greedy_soup(std::span<const Checkpoint> candidates, const Evaluator& eval, GreedyTrace* trace) {
  if (candidates.empty()) fail(ErrorKind::EmptyInput, "greedy soup of zero candidates");
  auto score = [&](const Checkpoint& c) {
    double s;
    try {
      s = eval(c);
    } catch (const std::exception& e) {
      fail(ErrorKind::EvaluationError, std::string("evaluator failed: ") + e.what());
    }
    if (!std::isfinite(s)) fail(ErrorKind::EvaluationError, "evaluator returned a non-finite score");
    return s;
  };

  GreedyTrace local;
  GreedyTrace& t = trace ? *trace : local;
  t = GreedyTrace{};
  for (const auto& c : candidates) t.scores.push_back(score(c));
  t.order.resize(candidates.size());
  std::iota(t.order.begin(), t.order.end(), size_t{0});
  std::stable_sort(t.order.begin(), t.order.end(), [&](size_t a, size_t b) { return t.scores[a] > t.scores[b]; });

  std::vector<Checkpoint> kept{candidates[t.order.front()]};
  t.accepted.push_back(t.order.front());
  Checkpoint current = candidates[t.order.front()];
  double best = t.scores[t.order.front()];
  for (size_t i = 1; i < t.order.size(); ++i) {
    kept.push_back(candidates[t.order[i]]);
    Checkpoint trial = uniform_soup(kept);
    const double s = score(trial);
    if (s >= best) {
      best = s;
      current = std::move(trial);
      t.accepted.push_back(t.order[i]);
    } else {
      kept.pop_back();
    }
  }
  t.final_score = best;
  return current;
}

int64_t soup_param_total(std::span<const FreezePlan> plans, const ArchDescriptor& arch, int64_t num_classes) {
  int64_t total = 0;
  for (const auto& p : plans) {
    if (p.arch_id != plans.front().arch_id)
      fail(ErrorKind::IncompatibleReports, "soup mixes plans for " + plans.front().arch_id + " and " + p.arch_id);
    total += param_count(arch, p, num_classes);
  }
  return total;
}

SoupOutcome run_soup_recipe(const SoupRecipe& recipe, const Evaluator& eval) {
  std::vector<Checkpoint> inputs;
  std::vector<double> weights;
  for (const auto& in : recipe.inputs) {
    inputs.push_back(read_checkpoint(in.path));
    weights.push_back(in.weight);
  }
  const bool any_plan =
      std::any_of(recipe.inputs.begin(), recipe.inputs.end(), [](const SoupInput& in) { return in.plan.has_value(); });
  const bool all_plans =
      std::all_of(recipe.inputs.begin(), recipe.inputs.end(), [](const SoupInput& in) { return in.plan.has_value(); });
  if (any_plan && !all_plans) fail(ErrorKind::FormatError, "attach a plan to every soup input or to none");
  std::vector<FreezePlan> plans;
  if (all_plans) {
    if (!recipe.base) fail(ErrorKind::FormatError, "soup recipe with plans needs a base checkpoint");
    for (const auto& in : recipe.inputs) plans.push_back(*in.plan);
    check_frozen_consistency(inputs, plans, read_checkpoint(*recipe.base));
  }

  SoupOutcome out;
  json manifest;
  GreedyTrace trace;
  if (recipe.mode == SoupMode::Greedy) {
    if (!eval) fail(ErrorKind::EvaluationError, "greedy soup needs an evaluator");
    out.merged = greedy_soup(inputs, eval, &trace);
    manifest["greedy"] = {{"order", trace.order},
                          {"scores", trace.scores},
                          {"accepted", trace.accepted},
                          {"final_score", trace.final_score}};
  } else {
    out.merged = uniform_soup(inputs, weights);
  }
  manifest["mode"] = recipe.mode == SoupMode::Greedy ? "greedy" : "uniform";
  json ins = json::array();
  for (size_t k = 0; k < inputs.size(); ++k)
    ins.push_back({{"path", recipe.inputs[k].path.filename().string()},
                   {"hash", inputs[k].content_hash()},
                   {"weight", weights[k]}});
  manifest["inputs"] = std::move(ins);
  manifest["output_hash"] = out.merged.content_hash();
  if (all_plans) {
    const ArchDescriptor arch = describe_arch_for(plans.front().arch_id, inputs.front());
    const int64_t classes =
        recipe.num_classes.value_or(inputs.front().contains("head.bias") ? inputs.front().at("head.bias").numel() : 0);
    std::vector<int64_t> per_run;
    for (const auto& p : plans) per_run.push_back(param_count(arch, p, classes));
    manifest["num_classes"] = classes;
    manifest["param_counts"] = per_run;
    manifest["param_total"] = soup_param_total(plans, arch, classes);
    manifest["param_total_display"] = format_soup_millions(per_run);
  }
  out.manifest = std::move(manifest);
  return out;
}

}  // namespace pft
