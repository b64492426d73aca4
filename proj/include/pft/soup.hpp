#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "pft/arch.hpp"
#include "pft/checkpoint.hpp"

namespace pft {

enum class SoupMode { Uniform, Greedy };

struct SoupInput {
  std::filesystem::path path;
  double weight = 1.0;
  std::optional<FreezePlan> plan;
};

struct SoupRecipe {
  std::vector<SoupInput> inputs;
  SoupMode mode = SoupMode::Uniform;
  std::optional<std::filesystem::path> base;         // required when plans are attached
  std::optional<std::filesystem::path> eval_config;  // greedy mode: toy config whose val split scores candidates
  std::optional<int64_t> num_classes;                // for the parameter totals in the manifest
};

// Relative paths resolve against `base_dir`.
SoupRecipe recipe_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

// Weighted elementwise mean of checkpoints with identical tensor names and
// shapes, reduced in input order.
Checkpoint uniform_soup(std::span<const Checkpoint> inputs, std::span<const double> weights = {});

// Every tensor an input's plan leaves frozen must equal the base bitwise.
void check_frozen_consistency(std::span<const Checkpoint> inputs, std::span<const FreezePlan> plans,
                              const Checkpoint& base);

using Evaluator = std::function<double(const Checkpoint&)>;

struct GreedyTrace {
  std::vector<size_t> order;     // candidate indices, best first
  std::vector<double> scores;    // individual scores, by candidate index
  std::vector<size_t> accepted;  // candidate indices kept in the soup
  double final_score = 0.0;
};

// Candidates ranked by eval (ties keep input order); each is kept iff adding
// it to the running uniform average does not lower the score.
Checkpoint greedy_soup(std::span<const Checkpoint> candidates, const Evaluator& eval, GreedyTrace* trace = nullptr);

// Sum of each run's trainable-parameter count.
int64_t soup_param_total(std::span<const FreezePlan> plans, const ArchDescriptor& arch, int64_t num_classes);

struct SoupOutcome {
  Checkpoint merged;
  nlohmann::json manifest;
};

// Loads the recipe's inputs and merges them. Greedy mode needs `eval`.
SoupOutcome run_soup_recipe(const SoupRecipe& recipe, const Evaluator& eval = {});

}  // namespace pft
