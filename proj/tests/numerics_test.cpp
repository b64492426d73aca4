#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "pft/numerics.hpp"
#include "test_util.hpp"

namespace pft {
namespace {

using pft::testing::throws_kind;

// All-pairs tau-b straight from the definition.
double brute_force_tau_b(const std::vector<double>& a, const std::vector<double>& b) {
  const int64_t n = static_cast<int64_t>(a.size());
  int64_t concordant = 0, discordant = 0, ties_a = 0, ties_b = 0;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = i + 1; j < n; ++j) {
      const bool ta = a[i] == a[j], tb = b[i] == b[j];
      if (ta) ++ties_a;
      if (tb) ++ties_b;
      if (ta || tb) continue;
      ((a[i] < a[j]) == (b[i] < b[j]) ? concordant : discordant) += 1;
    }
  const int64_t n0 = n * (n - 1) / 2;
  return static_cast<double>(concordant - discordant) /
         std::sqrt(static_cast<double>(n0 - ties_a) * static_cast<double>(n0 - ties_b));
}

TEST(VecAngle, AnalyticCases) {
  const std::vector<double> x{1.0, 0.0}, y{0.0, 1.0}, neg{-1.0, 0.0}, diag{1.0, 1.0};
  EXPECT_EQ(vec_angle(x, x), 0.0);
  EXPECT_NEAR(vec_angle(x, y), std::numbers::pi / 2, 1e-12);
  EXPECT_NEAR(vec_angle(x, neg), std::numbers::pi, 1e-12);
  EXPECT_NEAR(vec_angle(x, diag), std::acos(1.0 / std::sqrt(2.0)), 1e-12);
}

TEST(VecAngle, IdenticalRandomVectorsGiveExactlyZero) {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> u(1 + gen() % 300);
    for (auto& v : u) v = nd(gen) * std::pow(10.0, static_cast<double>(gen() % 7) - 3.0);
    EXPECT_EQ(vec_angle(u, u), 0.0);
  }
}

TEST(VecAngle, ScaleInvarianceAndSymmetry) {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> log_scale(-3.0, 3.0);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> u(2 + gen() % 64), v(u.size());
    for (size_t i = 0; i < u.size(); ++i) {
      u[i] = nd(gen);
      v[i] = nd(gen);
    }
    const double base = vec_angle(u, v);
    EXPECT_EQ(base, vec_angle(v, u));
    std::vector<double> su = u, sv = v;
    const double a = std::pow(10.0, log_scale(gen)), b = std::pow(10.0, log_scale(gen));
    for (auto& x : su) x *= a;
    for (auto& x : sv) x *= b;
    EXPECT_NEAR(vec_angle(su, sv), base, 1e-10);
  }
}

TEST(VecAngle, MatchesLongDoubleOracle) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> u(3 + gen() % 100), v(u.size());
    long double dot = 0, nu = 0, nv = 0;
    for (size_t i = 0; i < u.size(); ++i) {
      u[i] = nd(gen);
      v[i] = u[i] + 0.3 * nd(gen);
      dot += static_cast<long double>(u[i]) * v[i];
      nu += static_cast<long double>(u[i]) * u[i];
      nv += static_cast<long double>(v[i]) * v[i];
    }
    const double oracle = static_cast<double>(std::acos(dot / std::sqrt(nu * nv)));
    EXPECT_NEAR(vec_angle(u, v), oracle, 1e-9);
  }
}

TEST(VecAngle, HugeMagnitudesDoNotOverflow) {
  const std::vector<double> u{1e200, 1e200}, v{1e200, 0.0};
  EXPECT_NEAR(vec_angle(u, v), std::numbers::pi / 4, 1e-12);
}

TEST(VecAngle, Errors) {
  const std::vector<double> zero{0.0, 0.0}, x{1.0, 2.0}, longer{1.0, 2.0, 3.0};
  EXPECT_TRUE(throws_kind(ErrorKind::DegenerateVector, [&] { vec_angle(zero, x); }));
  EXPECT_TRUE(throws_kind(ErrorKind::DimensionMismatch, [&] { vec_angle(x, longer); }));
  const std::vector<double> bad{1.0, NAN};
  EXPECT_TRUE(throws_kind(ErrorKind::InvalidValue, [&] { vec_angle(bad, x); }));
}

TEST(AngleAccumulator, ChunkedEqualsConcatenated) {
  std::mt19937_64 gen(4);
  std::normal_distribution<float> nd;
  std::vector<float> u(257), v(257);
  for (size_t i = 0; i < u.size(); ++i) {
    u[i] = nd(gen);
    v[i] = nd(gen);
  }
  AngleAccumulator chunked;
  chunked.add(std::span(u).subspan(0, 100), std::span(v).subspan(0, 100));
  chunked.add(std::span(u).subspan(100), std::span(v).subspan(100));
  EXPECT_EQ(chunked.size(), 257u);
  EXPECT_EQ(chunked.angle(), vec_angle(std::span<const float>(u), std::span<const float>(v)));
  AngleAccumulator empty;
  EXPECT_TRUE(throws_kind(ErrorKind::DimensionMismatch, [&] { empty.angle(); }));
}

TEST(KendallTau, KnownValues) {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> rev{5, 4, 3, 2, 1};
  EXPECT_EQ(kendall_tau(a, a), 1.0);
  EXPECT_EQ(kendall_tau(a, rev), -1.0);
  // one discordant pair out of ten
  const std::vector<double> swap{1, 2, 3, 5, 4};
  EXPECT_DOUBLE_EQ(kendall_tau(a, swap), 0.8);
  // tie-corrected: tau-b = 1 / sqrt(3 * 2) ... pairs (0,1) tied in a
  const std::vector<double> ta{1, 1, 2}, tb{1, 2, 3};
  EXPECT_DOUBLE_EQ(kendall_tau(ta, tb), 2.0 / std::sqrt(2.0 * 3.0));
}

TEST(KendallTau, EqualsBruteForceOracleExactly) {
  std::mt19937_64 gen(5);
  int checked = 0;
  while (checked < 1000) {
    const size_t n = 2 + gen() % 7;
    const int levels = 2 + static_cast<int>(gen() % 6);  // small alphabets force ties
    std::vector<double> a(n), b(n);
    for (size_t i = 0; i < n; ++i) {
      a[i] = static_cast<double>(gen() % static_cast<uint64_t>(levels));
      b[i] = static_cast<double>(gen() % static_cast<uint64_t>(levels));
    }
    const bool a_const = std::all_of(a.begin(), a.end(), [&](double x) { return x == a[0]; });
    const bool b_const = std::all_of(b.begin(), b.end(), [&](double x) { return x == b[0]; });
    if (a_const || b_const) {
      EXPECT_TRUE(throws_kind(ErrorKind::DegenerateRanking, [&] { kendall_tau(a, b); }));
      continue;
    }
    EXPECT_EQ(kendall_tau(a, b), brute_force_tau_b(a, b));
    ++checked;
  }
}

TEST(KendallTau, LongRandomVectorsMatchOracle) {
  std::mt19937_64 gen(6);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> a(500), b(500);
    for (size_t i = 0; i < a.size(); ++i) {
      a[i] = static_cast<double>(gen() % 50);
      b[i] = a[i] + static_cast<double>(gen() % 20);
    }
    EXPECT_EQ(kendall_tau(a, b), brute_force_tau_b(a, b));
  }
}

TEST(KendallTau, Errors) {
  const std::vector<double> one{1.0}, two{1.0, 2.0}, three{1.0, 2.0, 3.0};
  EXPECT_TRUE(throws_kind(ErrorKind::DimensionMismatch, [&] { kendall_tau(one, one); }));
  EXPECT_TRUE(throws_kind(ErrorKind::DimensionMismatch, [&] { kendall_tau(two, three); }));
  const std::vector<double> nan{1.0, NAN};
  EXPECT_TRUE(throws_kind(ErrorKind::InvalidValue, [&] { kendall_tau(nan, two); }));
}

TEST(MeanStack, MatchesOracleWithinOneUlp) {
  std::mt19937_64 gen(7);
  std::normal_distribution<float> nd;
  for (int t = 0; t < 50; ++t) {
    const size_t k = 2 + gen() % 5, n = 1 + gen() % 200;
    std::vector<Tensor> ts;
    std::vector<double> w(k);
    for (size_t i = 0; i < k; ++i) {
      std::vector<float> d(n);
      for (auto& x : d) x = nd(gen) * 10.0f;
      ts.emplace_back(Shape{static_cast<int64_t>(n)}, d);
      w[i] = 0.1 + static_cast<double>(gen() % 100) / 10.0;
    }
    for (bool weighted : {false, true}) {
      const Tensor m = weighted ? mean_stack(ts, w) : mean_stack(ts);
      for (size_t e = 0; e < n; ++e) {
        long double num = 0, den = 0;
        for (size_t i = 0; i < k; ++i) {
          const long double wi = weighted ? w[i] : 1.0L;
          num += wi * ts[i].data()[e];
          den += wi;
        }
        const float oracle = static_cast<float>(num / den);
        const float got = m.data()[e];
        EXPECT_LE(std::abs(got - oracle), std::abs(std::nextafter(oracle, INFINITY) - oracle)) << e;
      }
    }
  }
}

TEST(MeanStack, IdenticalInputsAreIdentity) {
  const Tensor t(Shape{2, 3}, {1.5f, -2.25f, 3.0e-7f, 1e30f, -0.0f, 7.0f});
  const std::vector<Tensor> copies(5, t);
  EXPECT_TRUE(mean_stack(copies).bitwise_equal(t));
  const std::vector<double> w{0.5, 2.0, 1.0, 3.0, 0.25};
  EXPECT_TRUE(mean_stack(copies, w).bitwise_equal(t));
}

TEST(MeanStack, Errors) {
  const Tensor a(Shape{2}, {1.0f, 2.0f}), b(Shape{3}, {1.0f, 2.0f, 3.0f});
  EXPECT_TRUE(throws_kind(ErrorKind::EmptyInput, [] { mean_stack(std::vector<Tensor>{}); }));
  EXPECT_TRUE(throws_kind(ErrorKind::DimensionMismatch, [&] { mean_stack(std::vector<Tensor>{a, b}); }));
  const std::vector<double> neg{1.0, -1.0}, zero{0.0, 0.0}, one{1.0};
  EXPECT_TRUE(throws_kind(ErrorKind::InvalidValue, [&] { mean_stack(std::vector<Tensor>{a, a}, neg); }));
  EXPECT_TRUE(throws_kind(ErrorKind::InvalidValue, [&] { mean_stack(std::vector<Tensor>{a, a}, zero); }));
  EXPECT_TRUE(throws_kind(ErrorKind::DimensionMismatch, [&] { mean_stack(std::vector<Tensor>{a, a}, one); }));
}

TEST(Tensor, RejectsNonFiniteAndSizeMismatch) {
  EXPECT_TRUE(throws_kind(ErrorKind::InvalidValue, [] { Tensor(Shape{1}, {NAN}); }));
  EXPECT_TRUE(throws_kind(ErrorKind::InvalidValue, [] { Tensor(Shape{1}, {INFINITY}); }));
  EXPECT_TRUE(throws_kind(ErrorKind::DimensionMismatch, [] { Tensor(Shape{2, 2}, {1.0f}); }));
  EXPECT_EQ(shape_numel({}), 1);
  EXPECT_EQ(shape_numel({3, 0, 4}), 0);
}

}  // namespace
}  // namespace pft
