#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pft/train/config.hpp"

namespace pft::train {

struct GradCheckOptions {
  int samples = 256;      // total sampled scalars, spread over trainable tensors
  double step = 1e-5;     // central-difference step
  double init_std = 0.2;  // large enough that every path carries signal
  size_t batch = 4;
  double tolerance = 1e-4;
  // Test hook: perturbs the analytic gradient of this tensor.
  std::optional<std::string> corrupt_tensor;
};

struct TensorGradError {
  std::string name;
  int sampled = 0;
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8)
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  int sampled = 0;
  bool passed = false;
  std::vector<TensorGradError> per_tensor;
};

// Compares backpropagated gradients against central finite differences on
// the first training batch, in 64-bit arithmetic. Requires model_dim <= 16
// and depth <= 2. When cfg.freeze is set only its trainable tensors are
// checked.
GradCheckResult grad_check(const TrainConfig& cfg, const GradCheckOptions& opts = {});

nlohmann::json grad_check_to_json(const GradCheckResult& r);

}  // namespace pft::train
