#include "pft/train/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pft/error.hpp"
#include "pft/train/rng.hpp"
#include "pft/train/toy_vit.hpp"

namespace pft::train {

GradCheckResult grad_check(const TrainConfig& cfg, const GradCheckOptions& opts) {
  validate(cfg);
  if (cfg.dims.model_dim > 16 || cfg.dims.depth > 2)
    fail(ErrorKind::InvalidValue, "gradient check needs model_dim <= 16 and depth <= 2");
  if (opts.samples <= 0 || !(opts.step > 0.0))
    fail(ErrorKind::InvalidValue, "gradient check needs samples and step > 0");

  ToyVit model(cfg.dims, cfg.num_classes);
  model.init_fresh(cfg.seed, opts.init_std);
  model.init_head(cfg.seed, opts.init_std);
  // Non-trivial norm parameters so their gradients are exercised too.
  Rng jitter(Rng::derive(cfg.seed, 30));
  for (auto& p : model.params())
    if (p.shape.size() == 1 && p.name != "head.bias")
      for (auto& v : p.value) v += 0.5 * opts.init_std * jitter.normal();
  if (cfg.freeze)
    model.set_trainable(trainable_tensor_names(model.arch(), *cfg.freeze));
  else
    model.set_all_trainable();

  const Dataset data = generate_dataset(cfg.dataset);
  const Split& split = data.task(cfg.task).train;
  const size_t n = std::min(opts.batch, split.count());
  const size_t per = data.sample_size();
  const std::vector<float> x(split.features.begin(), split.features.begin() + static_cast<std::ptrdiff_t>(n * per));
  const std::vector<int> y(split.labels.begin(), split.labels.begin() + static_cast<std::ptrdiff_t>(n));

  model.zero_grad();
  model.loss(x, y, true);

  std::vector<size_t> checked;
  for (size_t i = 0; i < model.params().size(); ++i)
    if (model.params()[i].trainable) checked.push_back(i);
  GradCheckResult result;
  if (checked.empty()) {
    result.passed = true;
    return result;
  }

  // Budget split evenly, small tensors first so their leftover goes to larger ones.
  std::stable_sort(checked.begin(), checked.end(),
                   [&](size_t a, size_t b) { return model.params()[a].value.size() < model.params()[b].value.size(); });
  std::vector<size_t> budget(model.params().size(), 0);
  size_t remaining = static_cast<size_t>(opts.samples);
  for (size_t c = 0; c < checked.size(); ++c) {
    const size_t share = std::max<size_t>(1, remaining / (checked.size() - c));
    budget[checked[c]] = std::min(model.params()[checked[c]].value.size(), share);
    remaining -= std::min(remaining, budget[checked[c]]);
  }
  std::sort(checked.begin(), checked.end());

  Rng rng(Rng::derive(cfg.seed, 31));
  for (size_t ci : checked) {
    Param& p = model.params()[ci];
    const size_t k = budget[ci];
    std::vector<size_t> idx(p.value.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    for (size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
    idx.resize(k);

    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (size_t j : idx) {
      double analytic = p.grad[j];
      if (opts.corrupt_tensor && *opts.corrupt_tensor == p.name) analytic = analytic * 1.5 + 1e-3;
      const double orig = p.value[j];
      p.value[j] = orig + opts.step;
      const double lp = model.loss(x, y, false);
      p.value[j] = orig - opts.step;
      const double lm = model.loss(x, y, false);
      p.value[j] = orig;
      const double numeric = (lp - lm) / (2.0 * opts.step);
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-8});
    TensorGradError e{p.name, static_cast<int>(k), std::sqrt(diff2) / denom};
    result.sampled += e.sampled;
    if (e.rel_error > result.max_rel_error || result.worst_tensor.empty()) {
      result.max_rel_error = e.rel_error;
      result.worst_tensor = e.name;
    }
    result.per_tensor.push_back(std::move(e));
  }
  result.passed = result.max_rel_error <= opts.tolerance;
  return result;
}

nlohmann::json grad_check_to_json(const GradCheckResult& r) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& e : r.per_tensor)
    tensors.push_back({{"name", e.name}, {"sampled", e.sampled}, {"rel_error", e.rel_error}});
  return {{"max_rel_error", r.max_rel_error},
          {"worst_tensor", r.worst_tensor},
          {"sampled", r.sampled},
          {"passed", r.passed},
          {"tensors", tensors}};
}

}  // namespace pft::train
