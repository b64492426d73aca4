#include "pft/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "pft/error.hpp"
#include "pft/train/optimizer.hpp"
#include "pft/train/rng.hpp"
#include "pft/train/toy_vit.hpp"

namespace pft::train {

namespace {

std::set<std::string> plan_tensors(const TrainConfig& cfg, const ArchDescriptor& arch) {
  const FreezePlan& plan = *cfg.freeze;
  if (plan.arch_id != arch.arch_id())
    fail(ErrorKind::IncompatiblePlan, "freeze plan targets " + plan.arch_id + ", training uses " + arch.arch_id());
  for (const auto& id : plan.trainable_layers)
    if (!arch.has_layer(id))
      fail(ErrorKind::IncompatiblePlan, "freeze plan names layer " + id.str() + " absent from this toy_vit");
  return trainable_tensor_names(arch, plan);
}

void shuffle(std::vector<size_t>& order, Rng& rng) {
  for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
}

}  // namespace

RunResult run_training(const TrainConfig& cfg, const Checkpoint* init) {
  validate(cfg);
  return run_training(cfg, init, generate_dataset(cfg.dataset));
}

RunResult run_training(const TrainConfig& cfg, const Checkpoint* init, const Dataset& data) {
  const auto start = std::chrono::steady_clock::now();
  validate(cfg);
  if (!(data.spec == cfg.dataset)) fail(ErrorKind::InvalidValue, "dataset does not match the config's dataset spec");

  ToyVit model(cfg.dims, cfg.num_classes);
  if (init) {
    const Shape head_shape{cfg.num_classes, cfg.dims.model_dim};
    const bool keep_head = !cfg.reinit_head && init->contains("head.weight") &&
                           init->at("head.weight").shape() == head_shape && init->contains("head.bias") &&
                           init->at("head.bias").shape() == Shape{cfg.num_classes};
    std::set<std::string> skip;
    if (!keep_head) skip = {"head.weight", "head.bias"};
    model.load(*init, skip);
    if (!keep_head) model.init_head(cfg.seed);
  } else {
    model.init_fresh(cfg.seed);
    model.init_head(cfg.seed);
  }
  if (cfg.freeze)
    model.set_trainable(plan_tensors(cfg, model.arch()));
  else
    model.set_all_trainable();

  const TaskData& task = data.task(cfg.task);
  const size_t per = data.sample_size();
  const size_t n_train = task.train.count();
  const size_t batch = static_cast<size_t>(cfg.schedule.batch_size);
  const int64_t steps_per_epoch = static_cast<int64_t>((n_train + batch - 1) / batch);
  const int64_t total_steps = steps_per_epoch * cfg.schedule.epochs;
  const int64_t warmup_steps = steps_per_epoch * cfg.schedule.warmup_epochs;

  AdamW opt(cfg.optimizer, model.params());
  RunResult result;
  result.config_hash = config_hash(cfg);
  std::vector<float> xb;
  std::vector<int> yb;
  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.schedule.epochs; ++epoch) {
    std::vector<size_t> order(n_train);
    std::iota(order.begin(), order.end(), size_t{0});
    Rng rng(Rng::derive(Rng::derive(cfg.seed, 20), static_cast<uint64_t>(epoch)));
    shuffle(order, rng);
    double loss_sum = 0.0;
    for (size_t b0 = 0; b0 < n_train; b0 += batch) {
      const size_t bn = std::min(batch, n_train - b0);
      xb.resize(bn * per);
      yb.resize(bn);
      for (size_t i = 0; i < bn; ++i) {
        const size_t s = order[b0 + i];
        std::copy_n(task.train.features.begin() + static_cast<std::ptrdiff_t>(s * per), per,
                    xb.begin() + static_cast<std::ptrdiff_t>(i * per));
        yb[i] = task.train.labels[s];
      }
      model.zero_grad();
      const double loss = model.loss(xb, yb, true);
      if (!std::isfinite(loss))
        fail(ErrorKind::DivergenceError, "non-finite training loss at epoch " + std::to_string(epoch + 1));
      loss_sum += loss * static_cast<double>(bn);
      opt.step(model.params(), scheduled_lr(cfg.optimizer.learning_rate, step, total_steps, warmup_steps));
      ++step;
      for (const auto& p : model.params())
        if (p.trainable)
          for (double v : p.value)
            if (!std::isfinite(v) || std::abs(v) > 3.0e38)
              fail(ErrorKind::DivergenceError,
                   "parameter " + p.name + " became non-finite at epoch " + std::to_string(epoch + 1));
      model.round_to_storage();
    }
    result.metrics.push_back({epoch + 1, loss_sum / static_cast<double>(n_train), model.accuracy(task.val)});
  }

  result.final_checkpoint = model.to_checkpoint();
  result.final_checkpoint.set_meta(std::string(meta::kSeed), std::to_string(cfg.seed));
  result.final_checkpoint.set_meta(std::string(meta::kEpoch), std::to_string(cfg.schedule.epochs));
  result.final_checkpoint.set_meta(std::string(meta::kProducer), "pft-train");
  result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

double evaluate_accuracy(const Checkpoint& ckpt, const Split& split) {
  const ArchDescriptor arch = describe_arch_for("toy_vit", ckpt);
  const Tensor& bias = ckpt.at("head.bias");
  if (bias.shape().size() != 1) fail(ErrorKind::IncompatibleCheckpoints, "head.bias must be 1-D");
  ToyVit model(*arch.toy_dims(), bias.shape()[0]);
  model.load(ckpt);
  return model.accuracy(split);
}

std::string metrics_to_jsonl(const std::vector<EpochMetrics>& metrics) {
  std::string out;
  for (const auto& m : metrics) {
    nlohmann::json j{{"epoch", m.epoch}, {"train_loss", m.train_loss}, {"val_accuracy", m.val_accuracy}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

nlohmann::json run_summary(const TrainConfig& cfg, const RunResult& result) {
  nlohmann::json j{{"config", config_to_json(cfg)},
                   {"config_hash", result.config_hash},
                   {"checkpoint_hash", result.final_checkpoint.content_hash()},
                   {"epochs", result.metrics.size()}};
  if (!result.metrics.empty()) {
    j["final_train_loss"] = result.metrics.back().train_loss;
    j["final_val_accuracy"] = result.metrics.back().val_accuracy;
  }
  return j;
}

}  // namespace pft::train
