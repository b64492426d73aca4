#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include <gtest/gtest.h>

#include "pft/angles.hpp"
#include "pft/train/config.hpp"
#include "pft/train/rng.hpp"
#include "pft/train/toy_vit.hpp"
#include "pft/train/trainer.hpp"
#include "test_util.hpp"

namespace pft {
namespace {

using pft::testing::throws_kind;

const ToyDims kDims{3, 8, 2, 16, 4, 6};

Checkpoint toy_checkpoint(uint64_t seed) {
  train::ToyVit m(kDims, 5);
  m.init_fresh(seed, 0.1);
  return m.to_checkpoint();
}

// Copy of `c` with every tensor whose name satisfies `pick` rewritten by `f`.
Checkpoint transform(const Checkpoint& c, const std::function<bool(const std::string&)>& pick,
                     const std::function<float(float, size_t)>& f) {
  Checkpoint out;
  for (const auto& [k, v] : c.metadata()) out.set_meta(k, v);
  for (const auto& [name, t] : c.tensors()) {
    if (!pick(name)) {
      out.put(name, t);
      continue;
    }
    std::vector<float> d(t.data().begin(), t.data().end());
    for (size_t i = 0; i < d.size(); ++i) d[i] = f(d[i], i);
    out.put(name, Tensor(t.shape(), std::move(d)));
  }
  return out;
}

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

// Independent flatten-and-dot: long double, one pass over the concatenation.
double oracle_angle(const Checkpoint& a, const Checkpoint& b, const std::vector<std::string>& prefixes) {
  std::vector<std::string> names;
  for (const auto& n : a.names())
    for (const auto& p : prefixes)
      if (starts_with(n, p)) names.push_back(n);
  std::sort(names.begin(), names.end());
  std::vector<long double> u, v;
  for (const auto& n : names) {
    for (float x : a.at(n).data()) u.push_back(x);
    for (float x : b.at(n).data()) v.push_back(x);
  }
  long double dot = 0, nu = 0, nv = 0;
  for (size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  long double c = dot / std::sqrt(nu * nv);
  c = std::clamp(c, -1.0L, 1.0L);
  return static_cast<double>(std::acos(c));
}

AngleReport report_with(const std::string& arch_id, const std::vector<std::pair<LayerId, double>>& angles) {
  AngleReport r;
  r.arch_id = arch_id;
  for (const auto& [id, a] : angles) r.entries.push_back({id, GroupId{id.stage, id.category}, a, 0, 0});
  assign_ranks(r);
  return r;
}

// Kendall tau-b by enumerating every pair.
double brute_tau(const std::vector<double>& a, const std::vector<double>& b) {
  long long conc = 0, disc = 0, tie_a = 0, tie_b = 0, pairs = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    for (size_t j = i + 1; j < a.size(); ++j) {
      ++pairs;
      const double da = a[i] - a[j], db = b[i] - b[j];
      if (da == 0) ++tie_a;
      if (db == 0) ++tie_b;
      if (da == 0 || db == 0) continue;
      (da > 0) == (db > 0) ? ++conc : ++disc;
    }
  }
  return static_cast<double>(conc - disc) /
         std::sqrt(static_cast<double>(pairs - tie_a) * static_cast<double>(pairs - tie_b));
}

TEST(Angles, SelfComparisonIsZero) {
  const Checkpoint c = toy_checkpoint(1);
  const AngleReport r = compute_angles(c, c, describe_arch("toy_vit", kDims));
  ASSERT_EQ(r.entries.size(), 6u);
  for (const auto& e : r.entries) EXPECT_EQ(e.angle, 0.0) << e.layer_id.str();
  EXPECT_EQ(r.whole_model_angle, 0.0);
}

TEST(Angles, NegatedLayerIsPi) {
  const Checkpoint pre = toy_checkpoint(2);
  const ArchDescriptor arch = describe_arch("toy_vit", kDims);
  const auto& names = arch.layer({0, 1, LayerCategory::Attn}).tensor_names;
  const Checkpoint ft = transform(
      pre, [&](const std::string& n) { return std::find(names.begin(), names.end(), n) != names.end(); },
      [](float x, size_t) { return -x; });
  const AngleReport r = compute_angles(pre, ft, arch);
  for (const auto& e : r.entries) {
    if (e.layer_id == LayerId{0, 1, LayerCategory::Attn})
      EXPECT_DOUBLE_EQ(e.angle, std::numbers::pi);
    else
      EXPECT_EQ(e.angle, 0.0) << e.layer_id.str();
  }
}

TEST(Angles, ScaledLayerIsNearZero) {
  const Checkpoint pre = toy_checkpoint(3);
  const Checkpoint ft = transform(
      pre, [](const std::string& n) { return starts_with(n, "blocks.2."); }, [](float x, size_t) { return x * 4.0f; });
  const AngleReport r = compute_angles(pre, ft, describe_arch("toy_vit", kDims));
  for (const auto& e : r.entries) EXPECT_NEAR(e.angle, 0.0, 1e-6) << e.layer_id.str();
}

TEST(Angles, MatchesFlattenOracle) {
  const Checkpoint pre = toy_checkpoint(4);
  train::Rng rng(99);
  std::vector<double> noise(4096);
  for (auto& x : noise) x = rng.normal();
  const Checkpoint ft = transform(
      pre, [](const std::string& n) { return starts_with(n, "blocks.1.mlp.") || starts_with(n, "blocks.1.norm2."); },
      [&](float x, size_t i) { return x + 0.05f * static_cast<float>(noise[i % noise.size()]); });
  const AngleReport r = compute_angles(pre, ft, describe_arch("toy_vit", kDims));
  const double expected = oracle_angle(pre, ft, {"blocks.1.mlp.", "blocks.1.norm2."});
  EXPECT_GT(expected, 0.01);
  EXPECT_NEAR(r.entry({0, 1, LayerCategory::Ffn}).angle, expected, 1e-12);
  for (const auto& e : r.entries) {
    if (!(e.layer_id == LayerId{0, 1, LayerCategory::Ffn})) {
      EXPECT_EQ(e.angle, 0.0);
    }
  }
}

TEST(Angles, EveryLayerMatchesOracleUnderGlobalNoise) {
  const Checkpoint pre = toy_checkpoint(5);
  const Checkpoint other = toy_checkpoint(6);
  Checkpoint ft;
  for (const auto& [name, t] : pre.tensors()) {
    std::vector<float> d(t.data().begin(), t.data().end());
    const auto o = other.at(name).data();
    for (size_t i = 0; i < d.size(); ++i) d[i] = 0.8f * d[i] + 0.6f * o[i];
    ft.put(name, Tensor(t.shape(), std::move(d)));
  }
  const AngleReport r = compute_angles(pre, ft, describe_arch("toy_vit", kDims));
  for (int b = 0; b < kDims.depth; ++b) {
    const std::string p = "blocks." + std::to_string(b) + ".";
    EXPECT_NEAR(r.entry({0, b, LayerCategory::Attn}).angle, oracle_angle(pre, ft, {p + "attn.", p + "norm1."}), 1e-12);
    EXPECT_NEAR(r.entry({0, b, LayerCategory::Ffn}).angle, oracle_angle(pre, ft, {p + "mlp.", p + "norm2."}), 1e-12);
  }
  EXPECT_NEAR(r.whole_model_angle, oracle_angle(pre, ft, {"blocks."}), 1e-12);
}

TEST(Angles, HeadAndNonResidualExcluded) {
  const Checkpoint pre = toy_checkpoint(7);
  const Checkpoint ft = transform(
      pre, [](const std::string& n) { return !starts_with(n, "blocks."); }, [](float x, size_t) { return -x + 1.0f; });
  const AngleReport r = compute_angles(pre, ft, describe_arch("toy_vit", kDims));
  for (const auto& e : r.entries) EXPECT_EQ(e.angle, 0.0);
  const auto& ex = r.provenance.excluded_tensors;
  for (const char* n : {"head.weight", "head.bias", "cls_token", "pos_embed", "norm.weight", "patch_embed.proj.weight"})
    EXPECT_NE(std::find(ex.begin(), ex.end(), n), ex.end()) << n;
  EXPECT_EQ(r.provenance.pretrained_hash, pre.content_hash());
  EXPECT_EQ(r.provenance.finetuned_hash, ft.content_hash());
}

TEST(Angles, HeadSizeMayDiffer) {
  train::ToyVit a(kDims, 5), b(kDims, 9);
  a.init_fresh(8);
  b.init_fresh(8);
  const AngleReport r = compute_angles(a.to_checkpoint(), b.to_checkpoint(), describe_arch("toy_vit", kDims));
  for (const auto& e : r.entries) EXPECT_EQ(e.angle, 0.0);
}

TEST(Angles, Errors) {
  const ArchDescriptor arch = describe_arch("toy_vit", kDims);
  const Checkpoint pre = toy_checkpoint(9);

  Checkpoint missing;
  for (const auto& [n, t] : pre.tensors())
    if (n != "blocks.0.attn.proj.bias") missing.put(n, t);
  EXPECT_TRUE(throws_kind(ErrorKind::IncompatibleCheckpoints, [&] { compute_angles(pre, missing, arch); }));

  Checkpoint reshaped = missing;
  reshaped.put("blocks.0.attn.proj.bias", Tensor::zeros({4}));
  EXPECT_TRUE(throws_kind(ErrorKind::IncompatibleCheckpoints, [&] { compute_angles(pre, reshaped, arch); }));

  Checkpoint extra = pre;
  extra.put("mystery.weight", Tensor::zeros({2}));
  EXPECT_TRUE(throws_kind(ErrorKind::UnmappedTensor, [&] { compute_angles(pre, extra, arch); }));

  const Checkpoint zeroed = transform(
      pre, [](const std::string& n) { return starts_with(n, "blocks.0.") && n.find("norm1") == std::string::npos; },
      [](float, size_t) { return 0.0f; });
  const Checkpoint zeroed_all = transform(
      zeroed, [](const std::string& n) { return starts_with(n, "blocks.0.norm1"); },
      [](float, size_t) { return 0.0f; });
  EXPECT_TRUE(throws_kind(ErrorKind::DegenerateVector, [&] { compute_angles(pre, zeroed_all, arch); }));
}

TEST(Angles, RanksFollowAnglesWithShallowTies) {
  const AngleReport r = report_with("toy_vit", {{{0, 0, LayerCategory::Attn}, 0.3},
                                                {{0, 1, LayerCategory::Attn}, 0.1},
                                                {{0, 2, LayerCategory::Attn}, 0.2},
                                                {{0, 0, LayerCategory::Ffn}, 0.2},
                                                {{0, 1, LayerCategory::Ffn}, 0.2},
                                                {{0, 2, LayerCategory::Ffn}, 0.5}});
  const auto tables = group_rank_table(r);
  ASSERT_EQ(tables.size(), 2u);
  std::vector<int> attn, ffn;
  for (const auto& row : tables[0].rows) attn.push_back(row.rank);
  for (const auto& row : tables[1].rows) ffn.push_back(row.rank);
  EXPECT_EQ(attn, (std::vector<int>{1, 3, 2}));
  EXPECT_EQ(ffn, (std::vector<int>{2, 3, 1}));
}

TEST(Angles, TieAtDepthsThreeAndSeven) {
  const AngleReport r =
      report_with("vit_b16", {{{0, 7, LayerCategory::Attn}, 0.2}, {{0, 3, LayerCategory::Attn}, 0.2}});
  EXPECT_EQ(r.entry({0, 3, LayerCategory::Attn}).rank_in_group, 1);
  EXPECT_EQ(r.entry({0, 7, LayerCategory::Attn}).rank_in_group, 2);
}

TEST(Angles, SingletonGroup) {
  const AngleReport r = report_with("toy_vit", {{{0, 0, LayerCategory::Ffn}, 0.4}});
  const auto tables = group_rank_table(r);
  ASSERT_EQ(tables.size(), 1u);
  ASSERT_EQ(tables[0].rows.size(), 1u);
  EXPECT_EQ(tables[0].rows[0].rank, 1);
}

TEST(Angles, GlobalRankSpansStages) {
  const AngleReport r = report_with(
      "swin_b",
      {{{0, 0, LayerCategory::Attn}, 0.1}, {{1, 0, LayerCategory::Attn}, 0.4}, {{1, 1, LayerCategory::Attn}, 0.3}});
  EXPECT_EQ(r.entry({0, 0, LayerCategory::Attn}).rank_in_group, 1);
  EXPECT_EQ(r.entry({0, 0, LayerCategory::Attn}).global_rank, 3);
  EXPECT_EQ(r.entry({1, 0, LayerCategory::Attn}).global_rank, 1);
}

TEST(Consistency, DuplicateReport) {
  const AngleReport r = report_with(
      "toy_vit",
      {{{0, 0, LayerCategory::Attn}, 0.3}, {{0, 1, LayerCategory::Attn}, 0.1}, {{0, 2, LayerCategory::Attn}, 0.2}});
  const ConsistencyMatrix m = rank_consistency({r, r});
  EXPECT_EQ(m.tau, (std::vector<std::vector<double>>{{1, 1}, {1, 1}}));
  EXPECT_EQ(m.mean_tau, 1.0);
  EXPECT_EQ(m.report_ids, (std::vector<std::string>{"r0", "r1"}));
}

TEST(Consistency, ReversedOrder) {
  std::vector<std::pair<LayerId, double>> up, down;
  for (int b = 0; b < 6; ++b) {
    up.push_back({{0, b, LayerCategory::Ffn}, 0.1 * (b + 1)});
    down.push_back({{0, b, LayerCategory::Ffn}, 0.1 * (6 - b)});
  }
  const ConsistencyMatrix m = rank_consistency({report_with("toy_vit", up), report_with("toy_vit", down)});
  EXPECT_EQ(m.tau[0][1], -1.0);
  EXPECT_EQ(m.tau[1][0], -1.0);
}

TEST(Consistency, Errors) {
  const AngleReport a =
      report_with("toy_vit", {{{0, 0, LayerCategory::Attn}, 0.3}, {{0, 1, LayerCategory::Attn}, 0.1}});
  const AngleReport b =
      report_with("vit_b16", {{{0, 0, LayerCategory::Attn}, 0.3}, {{0, 1, LayerCategory::Attn}, 0.1}});
  const AngleReport c =
      report_with("toy_vit", {{{0, 0, LayerCategory::Attn}, 0.3}, {{0, 2, LayerCategory::Attn}, 0.1}});
  EXPECT_TRUE(throws_kind(ErrorKind::IncompatibleReports, [&] { rank_consistency({a}); }));
  EXPECT_TRUE(throws_kind(ErrorKind::IncompatibleReports, [&] { rank_consistency({a, b}); }));
  EXPECT_TRUE(throws_kind(ErrorKind::IncompatibleReports, [&] { rank_consistency({a, c}); }));
  const AngleReport flat =
      report_with("toy_vit", {{{0, 0, LayerCategory::Attn}, 0.2}, {{0, 1, LayerCategory::Attn}, 0.2}});
  EXPECT_TRUE(throws_kind(ErrorKind::DegenerateRanking, [&] { rank_consistency({a, flat}); }));
}

TEST(Consistency, SeedRunsMatchBruteForce) {
  train::TrainConfig cfg;
  cfg.dims = kDims;
  cfg.num_classes = 5;
  cfg.dataset.num_classes = 5;
  cfg.dataset.seq_len = kDims.seq_len;
  cfg.dataset.feature_dim = kDims.feature_dim;
  cfg.dataset.samples_per_class = 10;
  cfg.dataset.shift_magnitude = 1.0;
  cfg.dataset.seed = 4;
  cfg.schedule.epochs = 2;
  cfg.schedule.batch_size = 8;
  cfg.optimizer.learning_rate = 5e-3;
  const Checkpoint pre = toy_checkpoint(10);
  const ArchDescriptor arch = describe_arch("toy_vit", kDims);

  std::vector<AngleReport> reports;
  for (uint64_t seed : {11, 12, 13}) {
    cfg.seed = seed;
    reports.push_back(compute_angles(pre, train::run_training(cfg, &pre).final_checkpoint, arch));
  }
  const ConsistencyMatrix m = rank_consistency(reports);
  double sum = 0;
  for (size_t i = 0; i < 3; ++i)
    for (size_t j = i + 1; j < 3; ++j) {
      const double t = brute_tau(reports[i].angles(), reports[j].angles());
      EXPECT_NEAR(m.tau[i][j], t, 1e-12);
      sum += t;
    }
  EXPECT_NEAR(m.mean_tau, sum / 3.0, 1e-12);
}

TEST(Angles, JsonRoundTrip) {
  const Checkpoint pre = toy_checkpoint(14);
  const Checkpoint ft = toy_checkpoint(15);
  const AngleReport r = compute_angles(pre, ft, describe_arch("toy_vit", kDims));
  const nlohmann::json j = report_to_json(r);
  const AngleReport back = report_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(report_to_json(back).dump(), j.dump());
  for (size_t i = 0; i < r.entries.size(); ++i) {
    EXPECT_EQ(back.entries[i].angle, r.entries[i].angle);
    EXPECT_EQ(back.entries[i].rank_in_group, r.entries[i].rank_in_group);
  }
  nlohmann::json bad = j;
  bad["entries"][0]["angle"] = 4.0;
  EXPECT_TRUE(throws_kind(ErrorKind::FormatError, [&] { report_from_json(bad); }));
  EXPECT_TRUE(throws_kind(ErrorKind::FormatError, [&] { report_from_json(nlohmann::json::object()); }));
}

TEST(Angles, RenderedTableListsEveryGroup) {
  const AngleReport r = compute_angles(toy_checkpoint(16), toy_checkpoint(17), describe_arch("toy_vit", kDims));
  const std::string text = render_rank_table(r);
  EXPECT_NE(text.find("s0.ATTN"), std::string::npos);
  EXPECT_NE(text.find("s0.FFN"), std::string::npos);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2 + kDims.depth);
}

}  // namespace
}  // namespace pft
