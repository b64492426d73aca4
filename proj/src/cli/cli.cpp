#include "pft/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pft/angles.hpp"
#include "pft/arch.hpp"
#include "pft/checkpoint.hpp"
#include "pft/error.hpp"
#include "pft/planner.hpp"
#include "pft/soup.hpp"
#include "pft/train/config.hpp"
#include "pft/train/dataset.hpp"
#include "pft/train/grad_check.hpp"
#include "pft/train/pipeline.hpp"
#include "pft/train/trainer.hpp"

namespace pft {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

json load_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::FormatError, path.string() + ": " + e.what());
  }
}

// Runs `fn` and prefixes any toolkit error with the file it came from.
template <class F>
auto from_file(const fs::path& path, F&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.message());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::FormatError, path.string() + ": " + e.what());
  }
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::IoError, "cannot write " + path.string());
  f << text;
  if (!f) fail(ErrorKind::IoError, "write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  ensure_parent(path);
  return write_checkpoint(ckpt, path);
}

std::vector<int> parse_int_list(const std::string& text, const std::string& flag) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError(flag + ": '" + item + "' is not an integer");
    }
  }
  if (out.empty()) throw UsageError(flag + ": expected a comma-separated integer list");
  return out;
}

std::vector<std::vector<int>> parse_series(const std::string& text, const std::string& flag) {
  std::vector<std::vector<int>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) out.push_back(parse_int_list(item, flag));
  if (out.empty()) throw UsageError(flag + ": expected top-k lists separated by ';'");
  return out;
}

// Enum-valued flags: a bad value is a usage error naming the flag.
template <class F>
auto flag_value(const std::string& flag, const std::string& value, F&& parse) {
  try {
    return parse(value);
  } catch (const Error&) {
    throw UsageError(flag + ": unrecognized value '" + value + "'");
  }
}

std::string join_layers(const std::vector<LayerId>& ids) {
  std::string s;
  for (const auto& id : ids) s += (s.empty() ? "" : " ") + id.str();
  return s.empty() ? "(none)" : s;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (int k : v) s += (s.empty() ? "" : ",") + std::to_string(k);
  return s;
}

ArchDescriptor arch_for(const std::string& arch_id, const std::optional<fs::path>& config) {
  if (arch_id == "toy_vit" && config) {
    const auto cfg = train::load_config(*config);
    return describe_arch("toy_vit", cfg.dims);
  }
  if (config) throw UsageError("--config only applies to --arch toy_vit");
  if (arch_id == "toy_vit") throw UsageError("--arch toy_vit needs --config for its dimensions");
  return describe_arch(arch_id);
}

std::string describe_plan(const FreezePlan& plan, const ArchDescriptor& arch, const std::vector<int64_t>& classes) {
  std::string s = "strategy " + std::string(to_string(plan.strategy_tag));
  if (plan.policy) {
    s += " magnitude " + std::string(to_string(plan.policy->magnitude)) + " topk " +
         join_ints(plan.policy->topk_per_stage);
    if (plan.policy->difficulty) s += " difficulty " + std::string(to_string(*plan.policy->difficulty));
  }
  s += "\ntrainable layers (" + std::to_string(plan.trainable_layers.size()) +
       "): " + join_layers(plan.trainable_layers) + "\n";
  for (int64_t n : classes) {
    const int64_t c = param_count(arch, plan, n);
    s += "params @" + std::to_string(n) + " classes: " + std::to_string(c) + " (" + format_millions(c) + "M)\n";
  }
  return s;
}

struct Io {
  std::ostream& out;
  std::ostream& err;
};

// ---- angles ---------------------------------------------------------------

struct AnglesOpts {
  std::string pre, ft, arch, out;
  bool json = false;
};

int cmd_angles(const AnglesOpts& o, Io& io) {
  const Checkpoint pre = read_checkpoint(o.pre);
  const Checkpoint ft = read_checkpoint(o.ft);
  const ArchDescriptor arch = from_file(o.pre, [&] { return describe_arch_for(o.arch, pre); });
  const AngleReport report = compute_angles(pre, ft, arch);
  const json j = report_to_json(report);
  if (!o.out.empty()) write_json(o.out, j);
  if (o.json) {
    io.out << j.dump(2) << "\n";
  } else {
    io.out << render_rank_table(report);
  }
  return 0;
}

// ---- rank -----------------------------------------------------------------

struct RankOpts {
  std::vector<std::string> reports, ids;
  std::string out;
  bool json = false;
};

int cmd_rank(const RankOpts& o, Io& io) {
  if (!o.ids.empty() && o.ids.size() != o.reports.size()) throw UsageError("--ids needs one id per --reports entry");
  std::vector<AngleReport> reports;
  for (const auto& p : o.reports) reports.push_back(from_file(p, [&] { return report_from_json(load_json(p)); }));
  const ConsistencyMatrix m = rank_consistency(reports, o.ids.empty() ? o.reports : o.ids);
  const json j = consistency_to_json(m);
  if (!o.out.empty()) write_json(o.out, j);
  if (o.json) {
    io.out << j.dump(2) << "\n";
    return 0;
  }
  for (size_t i = 0; i < m.report_ids.size(); ++i) {
    io.out << "[" << i << "] " << m.report_ids[i] << "\n";
  }
  io.out << "     ";
  for (size_t i = 0; i < m.report_ids.size(); ++i) io.out << "  [" << i << "]  ";
  io.out << "\n";
  for (size_t i = 0; i < m.tau.size(); ++i) {
    io.out << "[" << i << "] ";
    for (double t : m.tau[i]) io.out << (t < 0 ? " " : "  ") << fixed(t, 3) << " ";
    io.out << "\n";
  }
  io.out << "mean pairwise tau: " << fixed(m.mean_tau, 4) << "\n";
  return 0;
}

// ---- plan -----------------------------------------------------------------

struct PlanOpts {
  std::string report, arch, config, magnitude, topk, difficulty, series, out;
  std::vector<int64_t> classes;
  bool json = false;
};

int cmd_plan(const PlanOpts& o, Io& io) {
  // Flags are checked before any file is read so usage mistakes exit 1.
  if (o.difficulty.empty() && (o.magnitude.empty() || (o.topk.empty() && o.series.empty())))
    throw UsageError("give --difficulty, or --magnitude with --topk or --series");
  std::optional<Difficulty> difficulty;
  if (!o.difficulty.empty()) difficulty = flag_value("--difficulty", o.difficulty, parse_difficulty);
  std::optional<Magnitude> magnitude;
  if (!o.magnitude.empty()) magnitude = flag_value("--magnitude", o.magnitude, parse_magnitude);
  std::optional<std::vector<int>> topk;
  if (!o.topk.empty()) topk = parse_int_list(o.topk, "--topk");
  std::vector<std::vector<int>> series;
  if (!o.series.empty()) series = parse_series(o.series, "--series");

  const AngleReport report = from_file(o.report, [&] { return report_from_json(load_json(o.report)); });
  if (!o.arch.empty() && o.arch != report.arch_id)
    fail(ErrorKind::IncompatibleReports, o.report + ": report is for " + report.arch_id + ", --arch is " + o.arch);
  std::optional<ArchDescriptor> arch;
  if (report.arch_id == "toy_vit" && o.config.empty()) {
    if (!o.classes.empty()) throw UsageError("--classes with a toy_vit report needs --config");
    ToyDims dims;
    dims.depth = static_cast<int>(report.entries.size() / 2);
    arch = describe_arch("toy_vit", dims);
  } else {
    arch = arch_for(report.arch_id, o.config.empty() ? std::nullopt : std::optional<fs::path>(o.config));
  }

  FapftPolicy policy;
  if (difficulty) policy = default_policy(*arch, *difficulty);
  if (magnitude) policy.magnitude = *magnitude;
  if (topk) policy.topk_per_stage = *topk;

  std::vector<FreezePlan> plans;
  if (!series.empty()) {
    plans = plan_series(report, *arch, policy.magnitude, series);
  } else {
    plans.push_back(plan_fapft(report, *arch, policy));
  }

  json j;
  if (plans.size() == 1) {
    j = plan_to_json(plans[0], *arch, o.classes);
  } else {
    j = json::array();
    for (const auto& p : plans) j.push_back(plan_to_json(p, *arch, o.classes));
  }
  if (!o.out.empty()) write_json(o.out, j);
  if (o.json) {
    io.out << j.dump(2) << "\n";
    return 0;
  }
  for (const auto& p : plans) io.out << describe_plan(p, *arch, o.classes);
  if (plans.size() > 1 && !o.classes.empty()) {
    for (int64_t n : o.classes) {
      std::vector<int64_t> counts;
      for (const auto& p : plans) counts.push_back(param_count(*arch, p, n));
      io.out << "series total @" << n << " classes: " << soup_param_total(plans, *arch, n) << " ("
             << format_soup_millions(counts) << "M)\n";
    }
  }
  return 0;
}

// ---- params ---------------------------------------------------------------

struct ParamsOpts {
  std::string arch, strategy, plan, topk, config, out;
  std::vector<int64_t> classes;
  bool json = false;
};

int cmd_params(const ParamsOpts& o, Io& io) {
  const int chosen = !o.strategy.empty() + !o.plan.empty() + !o.topk.empty();
  if (chosen != 1) throw UsageError("give exactly one of --strategy, --plan, --topk");
  const ArchDescriptor arch = arch_for(o.arch, o.config.empty() ? std::nullopt : std::optional<fs::path>(o.config));

  FreezePlan plan;
  if (!o.plan.empty()) {
    plan = from_file(o.plan, [&] { return plan_from_json(load_json(o.plan)); });
  } else if (!o.strategy.empty()) {
    const StrategyTag tag = flag_value("--strategy", o.strategy, parse_strategy);
    if (tag == StrategyTag::Fapft) throw UsageError("--strategy fapft needs layer choices; use --topk or --plan");
    plan = tag == StrategyTag::Full          ? full_plan(arch)
           : tag == StrategyTag::LinearProbe ? linear_probe_plan(arch)
                                             : manual_strategy(arch, tag);
  } else {
    // Every member of a homogeneous group has the same size, so the count
    // does not depend on which k layers are picked.
    const auto topk = parse_int_list(o.topk, "--topk");
    validate_policy(arch, FapftPolicy{Magnitude::Large, topk, {}});
    plan = FreezePlan{arch.arch_id(), StrategyTag::Fapft, {}, true, false, FapftPolicy{Magnitude::Large, topk, {}}};
    for (const auto& g : arch.groups())
      for (int i = 0; i < topk[static_cast<size_t>(g.id.stage)]; ++i)
        plan.trainable_layers.push_back(g.members[static_cast<size_t>(i)]);
    std::sort(plan.trainable_layers.begin(), plan.trainable_layers.end());
  }

  json counts = json::array();
  for (int64_t n : o.classes) {
    const int64_t c = param_count(arch, plan, n);
    counts.push_back({{"num_classes", n}, {"param_count", c}, {"millions", format_millions(c)}});
  }
  const json j{{"arch_id", arch.arch_id()}, {"strategy_tag", to_string(plan.strategy_tag)}, {"counts", counts}};
  if (!o.out.empty()) write_json(o.out, j);
  if (o.json) {
    io.out << j.dump(2) << "\n";
    return 0;
  }
  for (const auto& c : counts)
    io.out << "classes " << c["num_classes"].get<int64_t>() << ": " << c["param_count"].get<int64_t>() << " "
           << c["millions"].get<std::string>() << "M\n";
  return 0;
}

// ---- soup -----------------------------------------------------------------

struct SoupOpts {
  std::string recipe, out, manifest;
  bool json = false;
};

int cmd_soup(const SoupOpts& o, Io& io) {
  const fs::path recipe_path(o.recipe);
  const SoupRecipe recipe =
      from_file(recipe_path, [&] { return recipe_from_json(load_json(recipe_path), recipe_path.parent_path()); });
  std::optional<train::TrainConfig> eval_cfg;
  std::optional<train::Dataset> eval_data;
  Evaluator eval;
  if (recipe.eval_config) {
    eval_cfg = train::load_config(*recipe.eval_config);
    eval_data = train::generate_dataset(eval_cfg->dataset);
    eval = [&](const Checkpoint& c) { return train::evaluate_accuracy(c, eval_data->task(eval_cfg->task).val); };
  }
  SoupOutcome outcome = run_soup_recipe(recipe, eval);
  if (eval && recipe.mode == SoupMode::Uniform) {
    std::vector<double> scores;
    for (const auto& in : recipe.inputs) scores.push_back(eval(read_checkpoint(in.path)));
    outcome.manifest["eval"] = {
        {"split", "val"}, {"input_accuracy", scores}, {"merged_accuracy", eval(outcome.merged)}};
  }
  save_checkpoint(outcome.merged, o.out);
  const fs::path manifest_path = o.manifest.empty() ? fs::path(o.out + ".manifest.json") : fs::path(o.manifest);
  write_json(manifest_path, outcome.manifest);
  if (o.json) {
    io.out << outcome.manifest.dump(2) << "\n";
    return 0;
  }
  const json& m = outcome.manifest;
  io.out << m["mode"].get<std::string>() << " soup of " << m["inputs"].size() << " checkpoints\n";
  io.out << "output hash " << m["output_hash"].get<std::string>() << "\n";
  if (m.contains("param_total"))
    io.out << "trainable params total: " << m["param_total"].get<int64_t>() << " ("
           << m["param_total_display"].get<std::string>() << "M)\n";
  if (m.contains("greedy"))
    io.out << "greedy kept " << m["greedy"]["accepted"].size() << ", score "
           << fixed(m["greedy"]["final_score"].get<double>(), 4) << "\n";
  if (m.contains("eval"))
    io.out << "merged val accuracy " << fixed(m["eval"]["merged_accuracy"].get<double>(), 4) << "\n";
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainOpts {
  std::string config, plan, init, out;
  bool json = false;
};

json save_run(const fs::path& dir, const train::TrainConfig& cfg, const train::RunResult& r,
              const std::optional<std::string>& init_hash) {
  save_checkpoint(r.final_checkpoint, dir / "final.ckpt");
  write_text(dir / "metrics.jsonl", train::metrics_to_jsonl(r.metrics));
  json summary = train::run_summary(cfg, r);
  summary["init_hash"] = init_hash ? json(*init_hash) : json(nullptr);
  const ArchDescriptor arch = describe_arch("toy_vit", cfg.dims);
  summary["trainable_params"] = param_count(arch, cfg.freeze ? *cfg.freeze : full_plan(arch), cfg.num_classes);
  write_json(dir / "run.json", summary);
  return summary;
}

int cmd_train(const TrainOpts& o, Io& io) {
  train::TrainConfig cfg = train::load_config(o.config);
  if (!o.plan.empty()) cfg.freeze = from_file(o.plan, [&] { return plan_from_json(load_json(o.plan)); });
  std::optional<Checkpoint> init;
  if (!o.init.empty()) init = read_checkpoint(o.init);
  const train::RunResult r = from_file(o.init.empty() ? fs::path(o.config) : fs::path(o.init),
                                       [&] { return train::run_training(cfg, init ? &*init : nullptr); });
  io.err << "train: " << fixed(r.wall_time, 2) << " s\n";
  const json summary = save_run(o.out, cfg, r, init ? std::optional(init->content_hash()) : std::nullopt);
  if (o.json) {
    io.out << summary.dump(2) << "\n";
    return 0;
  }
  for (const auto& m : r.metrics)
    io.out << "epoch " << m.epoch << " loss " << fixed(m.train_loss, 6) << " val_acc " << fixed(m.val_accuracy, 4)
           << "\n";
  io.out << "trainable params " << summary["trainable_params"].get<int64_t>() << "\n";
  io.out << "checkpoint " << summary["checkpoint_hash"].get<std::string>() << "\n";
  return 0;
}

// ---- pipeline -------------------------------------------------------------

struct PipelineOpts {
  std::string config, difficulty, topk, init, series, out;
  bool json = false;
};

json run_row(const json& summary) {
  return {{"val_accuracy", summary["final_val_accuracy"]},
          {"train_loss", summary["final_train_loss"]},
          {"trainable_params", summary["trainable_params"]},
          {"checkpoint_hash", summary["checkpoint_hash"]}};
}

int cmd_pipeline(const PipelineOpts& o, Io& io) {
  const train::TrainConfig cfg = train::load_config(o.config);
  const fs::path dir(o.out);
  const ArchDescriptor arch = describe_arch("toy_vit", cfg.dims);
  json summary;

  Checkpoint pre;
  if (!o.init.empty()) {
    pre = read_checkpoint(o.init);
  } else {
    const train::RunResult p = train::run_pretraining(cfg);
    io.err << "pretrain: " << fixed(p.wall_time, 2) << " s\n";
    train::TrainConfig pcfg = cfg;
    pcfg.task = train::Task::Pretrain;
    pcfg.schedule.epochs = cfg.schedule.pretrain_epochs;
    pcfg.schedule.warmup_epochs = cfg.schedule.pretrain_epochs / 10;
    summary["pretrain"] = run_row(save_run(dir / "pretrain", pcfg, p, std::nullopt));
    pre = p.final_checkpoint;
  }
  const std::string pre_hash = pre.content_hash();
  const Difficulty difficulty = o.difficulty.empty() ? train::difficulty_for(cfg.dataset)
                                                     : flag_value("--difficulty", o.difficulty, parse_difficulty);
  std::optional<std::vector<int>> topk;
  if (!o.topk.empty()) topk = parse_int_list(o.topk, "--topk");

  const train::PipelineResult r = train::run_fapft_pipeline(cfg, pre, difficulty, topk);
  io.err << "pipeline: full " << fixed(r.full.wall_time, 2) << " s, fapft " << fixed(r.fapft.wall_time, 2)
         << " s, linear probe " << fixed(r.linear_probe.wall_time, 2) << " s\n";

  train::TrainConfig full_cfg = cfg, fapft_cfg = cfg, probe_cfg = cfg;
  full_cfg.freeze.reset();
  fapft_cfg.freeze = r.plan;
  probe_cfg.freeze = linear_probe_plan(arch);
  const int64_t classes[] = {cfg.num_classes};
  write_json(dir / "angles.json", report_to_json(r.angle_report));
  write_json(dir / "plan.json", plan_to_json(r.plan, arch, classes));

  summary["pretrained_hash"] = pre_hash;
  summary["difficulty"] = to_string(difficulty);
  summary["policy"] = {{"magnitude", to_string(r.policy.magnitude)}, {"topk_per_stage", r.policy.topk_per_stage}};
  summary["trainable_layers"] = json::array();
  for (const auto& id : r.plan.trainable_layers) summary["trainable_layers"].push_back(id.str());
  summary["whole_model_angle"] = r.angle_report.whole_model_angle;
  summary["full"] = run_row(save_run(dir / "full", full_cfg, r.full, pre_hash));
  summary["fapft"] = run_row(save_run(dir / "fapft", fapft_cfg, r.fapft, pre_hash));
  summary["linear_probe"] = run_row(save_run(dir / "linear_probe", probe_cfg, r.linear_probe, pre_hash));

  if (!o.series.empty()) {
    const auto series = parse_series(o.series, "--series");
    const auto plans = plan_series(r.angle_report, arch, r.policy.magnitude, series);
    const auto runs = train::run_plan_series(cfg, pre, plans);
    const train::Dataset data = train::generate_dataset(cfg.dataset);
    const auto& val = data.task(cfg.task).val;
    std::vector<Checkpoint> members;
    json rows = json::array();
    std::vector<int64_t> counts;
    for (size_t i = 0; i < runs.size(); ++i) {
      train::TrainConfig c = cfg;
      c.freeze = plans[i];
      const fs::path run_dir = dir / "series" / ("run" + std::to_string(i));
      json row = run_row(save_run(run_dir, c, runs[i], pre_hash));
      row["topk_per_stage"] = series[i];
      rows.push_back(row);
      write_json(run_dir / "plan.json", plan_to_json(plans[i], arch, classes));
      members.push_back(runs[i].final_checkpoint);
      counts.push_back(param_count(arch, plans[i], cfg.num_classes));
    }
    const Checkpoint merged = uniform_soup(members);
    const std::string soup_hash = save_checkpoint(merged, dir / "series" / "soup.ckpt");
    summary["series"] = {{"runs", rows},
                         {"soup",
                          {{"checkpoint_hash", soup_hash},
                           {"val_accuracy", train::evaluate_accuracy(merged, val)},
                           {"trainable_params_total", soup_param_total(plans, arch, cfg.num_classes)},
                           {"trainable_params_display", format_soup_millions(counts)}}}};
  }
  write_json(dir / "summary.json", summary);

  if (o.json) {
    io.out << summary.dump(2) << "\n";
    return 0;
  }
  io.out << "difficulty " << to_string(difficulty) << ", magnitude " << to_string(r.policy.magnitude) << ", topk "
         << join_ints(r.policy.topk_per_stage) << "\n";
  io.out << "selected layers: " << join_layers(r.plan.trainable_layers) << "\n";
  io.out << render_rank_table(r.angle_report);
  for (const char* name : {"full", "fapft", "linear_probe"}) {
    const json& row = summary[name];
    io.out << name << ": val_acc " << fixed(row["val_accuracy"].get<double>(), 4) << ", trainable params "
           << row["trainable_params"].get<int64_t>() << "\n";
  }
  if (summary.contains("series"))
    io.out << "series soup: val_acc " << fixed(summary["series"]["soup"]["val_accuracy"].get<double>(), 4)
           << ", params total " << summary["series"]["soup"]["trainable_params_total"].get<int64_t>() << "\n";
  return 0;
}

// ---- report ---------------------------------------------------------------

struct ReportOpts {
  std::string dir, out;
  bool json = false;
};

int cmd_report(const ReportOpts& o, Io& io) {
  const fs::path dir(o.dir);
  if (!fs::is_directory(dir)) fail(ErrorKind::IoError, "not a directory: " + o.dir);
  std::vector<fs::path> run_files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() == "run.json") run_files.push_back(e.path());
  std::sort(run_files.begin(), run_files.end());
  if (run_files.empty() && !fs::exists(dir / "angles.json"))
    fail(ErrorKind::FormatError, o.dir + ": no run or angle artifacts found");

  json j;
  j["runs"] = json::array();
  for (const auto& p : run_files) {
    const json s = load_json(p);
    from_file(p, [&] {
      std::string name = fs::relative(p.parent_path(), dir).generic_string();
      j["runs"].push_back({{"name", name == "." ? "run" : name},
                           {"val_accuracy", s.at("final_val_accuracy")},
                           {"train_loss", s.at("final_train_loss")},
                           {"trainable_params", s.value("trainable_params", json(nullptr))},
                           {"checkpoint_hash", s.at("checkpoint_hash")}});
      return 0;
    });
  }
  std::optional<AngleReport> angles;
  if (fs::exists(dir / "angles.json")) {
    angles = from_file(dir / "angles.json", [&] { return report_from_json(load_json(dir / "angles.json")); });
    j["whole_model_angle"] = angles->whole_model_angle;
    j["angles"] = report_to_json(*angles)["entries"];
  }
  if (fs::exists(dir / "summary.json")) {
    const json s = load_json(dir / "summary.json");
    for (const char* key : {"difficulty", "policy", "trainable_layers", "series"})
      if (s.contains(key)) j[key] = s[key];
  }
  if (!o.out.empty()) write_json(o.out, j);
  if (o.json) {
    io.out << j.dump(2) << "\n";
    return 0;
  }
  if (j.contains("difficulty"))
    io.out << "difficulty " << j["difficulty"].get<std::string>() << ", policy " << j["policy"].dump() << "\n";
  if (!j["runs"].empty()) {
    char line[256];
    std::snprintf(line, sizeof line, "%-24s %10s %12s %14s\n", "run", "val_acc", "train_loss", "trainable");
    io.out << line;
    for (const auto& r : j["runs"]) {
      const std::string params =
          r["trainable_params"].is_null() ? "-" : std::to_string(r["trainable_params"].get<int64_t>());
      std::snprintf(line, sizeof line, "%-24s %10.4f %12.6f %14s\n", r["name"].get<std::string>().c_str(),
                    r["val_accuracy"].get<double>(), r["train_loss"].get<double>(), params.c_str());
      io.out << line;
    }
  }
  if (angles) io.out << render_rank_table(*angles);
  return 0;
}

// ---- grad-check -----------------------------------------------------------

struct GradOpts {
  std::string config, corrupt, out;
  int samples = 256;
  bool json = false;
};

int cmd_grad_check(const GradOpts& o, Io& io) {
  const train::TrainConfig cfg = train::load_config(o.config);
  train::GradCheckOptions opts;
  opts.samples = o.samples;
  if (!o.corrupt.empty()) opts.corrupt_tensor = o.corrupt;
  const train::GradCheckResult r = train::grad_check(cfg, opts);
  const json j = train::grad_check_to_json(r);
  if (!o.out.empty()) write_json(o.out, j);
  if (o.json) {
    io.out << j.dump(2) << "\n";
  } else {
    char line[256];
    for (const auto& e : r.per_tensor) {
      std::snprintf(line, sizeof line, "%-32s %4d %.3e\n", e.name.c_str(), e.sampled, e.rel_error);
      io.out << line;
    }
    std::snprintf(line, sizeof line, "max relative error %.3e in %s over %d samples: %s\n", r.max_rel_error,
                  r.worst_tensor.c_str(), r.sampled, r.passed ? "PASS" : "FAIL");
    io.out << line;
  }
  if (!r.passed) {
    io.err << "pft: gradient check failed, worst tensor " << r.worst_tensor << "\n";
    return 3;
  }
  return 0;
}

// ---- dataset --------------------------------------------------------------

struct DatasetOpts {
  std::string config, spec, out;
  bool json = false;
};

int cmd_dataset(const DatasetOpts& o, Io& io) {
  if (o.config.empty() == o.spec.empty()) throw UsageError("give exactly one of --config, --spec");
  train::SyntheticSpec spec;
  if (!o.config.empty()) {
    spec = train::load_config(o.config).dataset;
  } else {
    const train::SyntheticSpec d;
    spec = from_file(o.spec, [&] {
      auto s = train::spec_from_json(load_json(o.spec), d.num_classes, d.seq_len, d.feature_dim);
      train::validate(s);
      return s;
    });
  }
  const train::Dataset data = train::generate_dataset(spec);
  const std::string hash = save_checkpoint(data.to_checkpoint(), o.out);
  const json j{{"spec", train::spec_to_json(spec)},
               {"hash", hash},
               {"pretrain", {{"train", data.pretrain.train.count()}, {"val", data.pretrain.val.count()}}},
               {"finetune", {{"train", data.finetune.train.count()}, {"val", data.finetune.val.count()}}}};
  if (o.json) {
    io.out << j.dump(2) << "\n";
    return 0;
  }
  io.out << "dataset " << hash << "\n";
  io.out << "pretrain train " << data.pretrain.train.count() << " val " << data.pretrain.val.count() << "\n";
  io.out << "finetune train " << data.finetune.train.count() << " val " << data.finetune.val.count() << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Angle-guided partial fine-tuning toolkit", "pft"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  AnglesOpts angles;
  auto* c_angles = app.add_subcommand("angles", "Per-layer fine-tuned angles between two checkpoints");
  c_angles->add_option("--pre", angles.pre, "Pre-trained checkpoint")->required();
  c_angles->add_option("--ft", angles.ft, "Fine-tuned checkpoint")->required();
  c_angles->add_option("--arch", angles.arch, "Architecture id (vit_b16, swin_b, toy_vit)")->required();
  c_angles->add_option("--out", angles.out, "Write the report JSON here");
  c_angles->add_flag("--json", angles.json, "Print JSON");

  RankOpts rank;
  auto* c_rank = app.add_subcommand("rank", "Kendall tau consistency between angle reports");
  c_rank->add_option("--reports", rank.reports, "Angle report files")->required()->expected(2, -1);
  c_rank->add_option("--ids", rank.ids, "Labels for the reports");
  c_rank->add_option("--out", rank.out, "Write the matrix JSON here");
  c_rank->add_flag("--json", rank.json, "Print JSON");

  PlanOpts plan;
  auto* c_plan = app.add_subcommand("plan", "Angle-guided freeze plan from a report");
  c_plan->add_option("--report", plan.report, "Angle report")->required();
  c_plan->add_option("--arch", plan.arch, "Expected architecture id");
  c_plan->add_option("--config", plan.config, "Train config giving toy_vit dimensions");
  c_plan->add_option("--magnitude", plan.magnitude, "large or small");
  c_plan->add_option("--topk", plan.topk, "Top-k per stage, comma separated");
  c_plan->add_option("--difficulty", plan.difficulty, "easy or challenging (default policy)");
  c_plan->add_option("--series", plan.series, "Several top-k lists separated by ';'");
  c_plan->add_option("--classes", plan.classes, "Head sizes for parameter counts")->delimiter(',');
  c_plan->add_option("--out", plan.out, "Write the plan JSON here");
  c_plan->add_flag("--json", plan.json, "Print JSON");

  ParamsOpts params;
  auto* c_params = app.add_subcommand("params", "Exact trainable-parameter counts");
  c_params->add_option("--arch", params.arch, "Architecture id")->required();
  c_params->add_option("--strategy", params.strategy, "A..I, attn_only, ffn_only, full, linear_probe");
  c_params->add_option("--plan", params.plan, "Freeze plan JSON");
  c_params->add_option("--topk", params.topk, "Top-k per stage, comma separated");
  c_params->add_option("--classes", params.classes, "Head sizes")->required()->delimiter(',');
  c_params->add_option("--config", params.config, "Train config giving toy_vit dimensions");
  c_params->add_option("--out", params.out, "Write the counts JSON here");
  c_params->add_flag("--json", params.json, "Print JSON");

  SoupOpts soup;
  auto* c_soup = app.add_subcommand("soup", "Average checkpoints from a recipe");
  c_soup->add_option("--recipe", soup.recipe, "Soup recipe JSON")->required();
  c_soup->add_option("--out", soup.out, "Merged checkpoint path")->required();
  c_soup->add_option("--manifest", soup.manifest, "Manifest path (default <out>.manifest.json)");
  c_soup->add_flag("--json", soup.json, "Print the manifest");

  TrainOpts trn;
  auto* c_train = app.add_subcommand("train", "Train the toy transformer");
  c_train->add_option("--config", trn.config, "Train config JSON")->required();
  c_train->add_option("--plan", trn.plan, "Freeze plan JSON (overrides the config)");
  c_train->add_option("--init", trn.init, "Initial checkpoint (fresh init when absent)");
  c_train->add_option("--out", trn.out, "Output directory")->required();
  c_train->add_flag("--json", trn.json, "Print the run summary");

  PipelineOpts pipe;
  auto* c_pipe = app.add_subcommand("pipeline", "Full fine-tune, angles, layer selection, partial fine-tune");
  c_pipe->add_option("--config", pipe.config, "Train config JSON")->required();
  c_pipe->add_option("--difficulty", pipe.difficulty, "easy or challenging (default from the shift magnitude)");
  c_pipe->add_option("--topk", pipe.topk, "Override the default top-k");
  c_pipe->add_option("--init", pipe.init, "Pre-trained checkpoint (pre-trains when absent)");
  c_pipe->add_option("--series", pipe.series, "Extra top-k runs to soup, lists separated by ';'");
  c_pipe->add_option("--out", pipe.out, "Output directory")->required();
  c_pipe->add_flag("--json", pipe.json, "Print the summary");

  ReportOpts report;
  auto* c_report = app.add_subcommand("report", "Summarize the runs under a directory");
  c_report->add_option("--dir", report.dir, "Artifact directory")->required();
  c_report->add_option("--out", report.out, "Write the summary JSON here");
  c_report->add_flag("--json", report.json, "Print JSON");

  GradOpts grad;
  auto* c_grad = app.add_subcommand("grad-check", "Analytic vs finite-difference gradients");
  c_grad->add_option("--config", grad.config, "Train config JSON with tiny dimensions")->required();
  c_grad->add_option("--corrupt", grad.corrupt, "Perturb this tensor's analytic gradient");
  c_grad->add_option("--samples", grad.samples, "Number of sampled scalars");
  c_grad->add_option("--out", grad.out, "Write the result JSON here");
  c_grad->add_flag("--json", grad.json, "Print JSON");

  DatasetOpts dataset;
  auto* c_data = app.add_subcommand("dataset", "Generate a synthetic dataset");
  c_data->add_option("--config", dataset.config, "Train config JSON");
  c_data->add_option("--spec", dataset.spec, "Dataset spec JSON");
  c_data->add_option("--out", dataset.out, "Output checkpoint path")->required();
  c_data->add_flag("--json", dataset.json, "Print JSON");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }

  Io io{out, err};
  try {
    if (c_angles->parsed()) return cmd_angles(angles, io);
    if (c_rank->parsed()) return cmd_rank(rank, io);
    if (c_plan->parsed()) return cmd_plan(plan, io);
    if (c_params->parsed()) return cmd_params(params, io);
    if (c_soup->parsed()) return cmd_soup(soup, io);
    if (c_train->parsed()) return cmd_train(trn, io);
    if (c_pipe->parsed()) return cmd_pipeline(pipe, io);
    if (c_report->parsed()) return cmd_report(report, io);
    if (c_grad->parsed()) return cmd_grad_check(grad, io);
    if (c_data->parsed()) return cmd_dataset(dataset, io);
  } catch (const UsageError& e) {
    err << "pft: usage error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "pft: " << to_string(e.kind()) << ": " << e.message() << "\n";
    return is_numerical(e.kind()) ? 3 : 2;
  } catch (const fs::filesystem_error& e) {
    err << "pft: IoError: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    err << "pft: FormatError: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace pft
