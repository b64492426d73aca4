#include "pft/train/dataset.hpp"

#include <cmath>

#include "pft/error.hpp"
#include "pft/train/rng.hpp"

namespace pft::train {

using nlohmann::json;

nlohmann::json spec_to_json(const SyntheticSpec& s) {
  return json{{"num_classes", s.num_classes},
              {"samples_per_class", s.samples_per_class},
              {"seq_len", s.seq_len},
              {"feature_dim", s.feature_dim},
              {"class_center_scale", s.class_center_scale},
              {"noise_scale", s.noise_scale},
              {"shift_magnitude", s.shift_magnitude},
              {"shift_mode", s.shift_mode == ShiftMode::Shared ? "shared" : "independent"},
              {"seed", s.seed},
              {"shift_seed", s.shift_seed}};
}

SyntheticSpec spec_from_json(const json& j, int64_t default_classes, int64_t default_seq_len,
                             int64_t default_feature_dim) {
  try {
    SyntheticSpec s;
    s.num_classes = j.value("num_classes", default_classes);
    s.samples_per_class = j.value("samples_per_class", s.samples_per_class);
    s.seq_len = j.value("seq_len", default_seq_len);
    s.feature_dim = j.value("feature_dim", default_feature_dim);
    s.class_center_scale = j.value("class_center_scale", s.class_center_scale);
    s.noise_scale = j.value("noise_scale", s.noise_scale);
    s.shift_magnitude = j.value("shift_magnitude", s.shift_magnitude);
    const std::string mode = j.value("shift_mode", "independent");
    if (mode == "independent") {
      s.shift_mode = ShiftMode::Independent;
    } else if (mode == "shared") {
      s.shift_mode = ShiftMode::Shared;
    } else {
      fail(ErrorKind::FormatError, "shift_mode must be independent or shared, got '" + mode + "'");
    }
    s.seed = j.value("seed", uint64_t{0});
    s.shift_seed = j.value("shift_seed", s.seed);
    validate(s);
    return s;
  } catch (const json::exception& e) {
    fail(ErrorKind::FormatError, std::string("malformed dataset spec: ") + e.what());
  }
}

void validate(const SyntheticSpec& s) {
  if (s.num_classes < 2) fail(ErrorKind::InvalidValue, "dataset needs at least 2 classes");
  if (s.samples_per_class < 5) fail(ErrorKind::InvalidValue, "dataset needs at least 5 samples per class");
  if (s.seq_len <= 0 || s.feature_dim <= 0) fail(ErrorKind::InvalidValue, "seq_len and feature_dim must be positive");
  if (!(s.class_center_scale >= 0.0) || !(s.noise_scale >= 0.0) || !(s.shift_magnitude >= 0.0) ||
      !std::isfinite(s.class_center_scale) || !std::isfinite(s.noise_scale) || !std::isfinite(s.shift_magnitude))
    fail(ErrorKind::InvalidValue, "dataset scales must be finite and non-negative");
}

namespace {

enum Stream : uint64_t { kCenters = 1, kShift = 2, kPretrainNoise = 3, kFinetuneNoise = 4 };

void fill_samples(TaskData& task, const SyntheticSpec& s, uint64_t stream) {
  Rng rng(Rng::derive(s.seed, stream));
  const size_t width = static_cast<size_t>(s.seq_len * s.feature_dim);
  for (int64_t k = 0; k < s.num_classes; ++k) {
    const float* center = task.centers.data() + static_cast<size_t>(k) * width;
    for (int64_t j = 0; j < s.samples_per_class; ++j) {
      const int64_t index = k * s.samples_per_class + j;
      Split& split = index % 5 == 4 ? task.val : task.train;
      for (size_t d = 0; d < width; ++d)
        split.features.push_back(static_cast<float>(center[d] + s.noise_scale * rng.normal()));
      split.labels.push_back(static_cast<int>(k));
    }
  }
}

}  // namespace

Dataset generate_dataset(const SyntheticSpec& s) {
  validate(s);
  Dataset data;
  data.spec = s;
  const size_t width = static_cast<size_t>(s.seq_len * s.feature_dim);
  const size_t total = static_cast<size_t>(s.num_classes) * width;

  Rng center_rng(Rng::derive(s.seed, kCenters));
  data.pretrain.centers.resize(total);
  for (float& c : data.pretrain.centers) c = static_cast<float>(s.class_center_scale * center_rng.normal());

  data.finetune.centers = data.pretrain.centers;
  if (s.shift_magnitude != 0.0) {
    Rng shift_rng(Rng::derive(s.shift_seed, kShift));
    const auto tokens = static_cast<size_t>(s.seq_len);
    const auto dim = static_cast<size_t>(s.feature_dim);
    for (int64_t k = 0; k < s.num_classes; ++k) {
      std::vector<double> shared(dim);
      if (s.shift_mode == ShiftMode::Shared)
        for (double& x : shared) x = s.class_center_scale * shift_rng.normal();
      for (size_t t = 0; t < tokens; ++t) {
        for (size_t d = 0; d < dim; ++d) {
          const double dir = s.shift_mode == ShiftMode::Shared ? shared[d] : s.class_center_scale * shift_rng.normal();
          float& c = data.finetune.centers[static_cast<size_t>(k) * width + t * dim + d];
          c = static_cast<float>(c + s.shift_magnitude * dir);
        }
      }
    }
  }
  fill_samples(data.pretrain, s, kPretrainNoise);
  fill_samples(data.finetune, s, kFinetuneNoise);
  return data;
}

Checkpoint Dataset::to_checkpoint() const {
  Checkpoint c;
  auto add_task = [&](const std::string& prefix, const TaskData& t) {
    c.put(prefix + ".centers", Tensor({spec.num_classes, spec.seq_len, spec.feature_dim}, t.centers));
    auto add_split = [&](const std::string& name, const Split& split) {
      const auto n = static_cast<int64_t>(split.count());
      c.put(prefix + "." + name + ".x", Tensor({n, spec.seq_len, spec.feature_dim}, split.features));
      std::vector<float> labels(split.labels.begin(), split.labels.end());
      c.put(prefix + "." + name + ".y", Tensor({n}, std::move(labels)));
    };
    add_split("train", t.train);
    add_split("val", t.val);
  };
  add_task("pretrain", pretrain);
  add_task("finetune", finetune);
  c.set_meta(std::string(meta::kProducer), "pft-dataset");
  c.set_meta("pft.dataset.spec", spec_to_json(spec).dump());
  return c;
}

}  // namespace pft::train
