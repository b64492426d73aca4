#include "pft/train/config.hpp"

#include <cmath>
#include <fstream>

#include "pft/checkpoint.hpp"
#include "pft/error.hpp"

namespace pft::train {

using nlohmann::json;

void validate(const TrainConfig& cfg) {
  const ToyDims& d = cfg.dims;
  if (d.depth < 0 || d.model_dim <= 0 || d.heads <= 0 || d.ffn_dim <= 0 || d.seq_len <= 0 || d.feature_dim <= 0)
    fail(ErrorKind::InvalidValue, "toy dimensions must be positive");
  if (d.model_dim % d.heads != 0) fail(ErrorKind::InvalidValue, "model_dim must be divisible by heads");
  if (cfg.num_classes < 2) fail(ErrorKind::InvalidValue, "num_classes must be at least 2");
  const auto& o = cfg.optimizer;
  if (!(o.learning_rate > 0.0) || !(o.epsilon > 0.0) || !(o.weight_decay >= 0.0) || !(o.beta1 > 0.0 && o.beta1 < 1.0) ||
      !(o.beta2 > 0.0 && o.beta2 < 1.0))
    fail(ErrorKind::InvalidValue, "optimizer rates must be positive and betas in (0, 1)");
  const auto& s = cfg.schedule;
  if (s.epochs <= 0 || s.batch_size <= 0 || s.pretrain_epochs <= 0)
    fail(ErrorKind::InvalidValue, "epochs, pretrain_epochs and batch_size must be positive");
  if (s.warmup_epochs < 0 || s.warmup_epochs > s.epochs)
    fail(ErrorKind::InvalidValue, "warmup_epochs must lie in [0, epochs]");
  validate(cfg.dataset);
  if (cfg.dataset.num_classes != cfg.num_classes || cfg.dataset.seq_len != d.seq_len ||
      cfg.dataset.feature_dim != d.feature_dim)
    fail(ErrorKind::InvalidValue, "dataset classes/seq_len/feature_dim must match the model");
}

json config_to_json(const TrainConfig& cfg) {
  json arch = cfg.dims;
  arch["num_classes"] = cfg.num_classes;
  json j{{"arch", arch},
         {"optimizer",
          {{"learning_rate", cfg.optimizer.learning_rate},
           {"beta1", cfg.optimizer.beta1},
           {"beta2", cfg.optimizer.beta2},
           {"epsilon", cfg.optimizer.epsilon},
           {"weight_decay", cfg.optimizer.weight_decay}}},
         {"schedule",
          {{"epochs", cfg.schedule.epochs},
           {"warmup_epochs", cfg.schedule.warmup_epochs},
           {"batch_size", cfg.schedule.batch_size},
           {"pretrain_epochs", cfg.schedule.pretrain_epochs}}},
         {"seed", cfg.seed},
         {"dataset", spec_to_json(cfg.dataset)},
         {"task", cfg.task == Task::Pretrain ? "pretrain" : "finetune"},
         {"reinit_head", cfg.reinit_head}};
  if (cfg.freeze) {
    const ArchDescriptor arch_desc = describe_arch("toy_vit", cfg.dims);
    const int64_t classes[] = {cfg.num_classes};
    j["freeze"] = plan_to_json(*cfg.freeze, arch_desc, classes);
  }
  return j;
}

TrainConfig config_from_json(const json& j) {
  try {
    TrainConfig cfg;
    const json arch = j.value("arch", json::object());
    cfg.dims = arch.get<ToyDims>();
    cfg.num_classes = arch.value("num_classes", cfg.num_classes);
    const json opt = j.value("optimizer", json::object());
    cfg.optimizer.learning_rate = opt.value("learning_rate", cfg.optimizer.learning_rate);
    cfg.optimizer.beta1 = opt.value("beta1", cfg.optimizer.beta1);
    cfg.optimizer.beta2 = opt.value("beta2", cfg.optimizer.beta2);
    cfg.optimizer.epsilon = opt.value("epsilon", cfg.optimizer.epsilon);
    cfg.optimizer.weight_decay = opt.value("weight_decay", cfg.optimizer.weight_decay);
    const json sched = j.value("schedule", json::object());
    cfg.schedule.epochs = sched.value("epochs", cfg.schedule.epochs);
    cfg.schedule.warmup_epochs = sched.value("warmup_epochs", cfg.schedule.epochs / 10);
    cfg.schedule.batch_size = sched.value("batch_size", cfg.schedule.batch_size);
    cfg.schedule.pretrain_epochs = sched.value("pretrain_epochs", 2 * cfg.schedule.epochs);
    cfg.seed = j.value("seed", uint64_t{0});
    cfg.dataset =
        spec_from_json(j.value("dataset", json::object()), cfg.num_classes, cfg.dims.seq_len, cfg.dims.feature_dim);
    const std::string task = j.value("task", "finetune");
    if (task == "pretrain") {
      cfg.task = Task::Pretrain;
    } else if (task == "finetune") {
      cfg.task = Task::Finetune;
    } else {
      fail(ErrorKind::FormatError, "task must be pretrain or finetune, got '" + task + "'");
    }
    cfg.reinit_head = j.value("reinit_head", false);
    if (j.contains("freeze") && !j["freeze"].is_null()) cfg.freeze = plan_from_json(j["freeze"]);
    validate(cfg);
    return cfg;
  } catch (const json::exception& e) {
    fail(ErrorKind::FormatError, std::string("malformed train config: ") + e.what());
  }
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::FormatError, path.string() + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.message());
  }
}

std::string config_hash(const TrainConfig& cfg) { return sha256_hex(config_to_json(cfg).dump()); }

}  // namespace pft::train
