#include <bit>
#include <cstring>
#include <fstream>
#include <random>
#include <set>

#include <gtest/gtest.h>
#include <json.hpp>

#include "pft/checkpoint.hpp"
#include "test_util.hpp"

namespace pft {
namespace {

using nlohmann::json;
using pft::testing::TempDir;
using pft::testing::throws_kind;

std::string le64(uint64_t v) {
  std::string s(8, '\0');
  for (int i = 0; i < 8; ++i) s[static_cast<size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xff);
  return s;
}

std::string assemble(const std::string& header, const std::string& payload) {
  return le64(header.size()) + header + payload;
}

std::string f32_bytes(std::initializer_list<float> values) {
  std::string s;
  for (float f : values) {
    const auto bits = std::bit_cast<uint32_t>(f);
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  return s;
}

float random_float(std::mt19937_64& gen) {
  switch (gen() % 6) {
    case 0:
      return -0.0f;
    case 1:
      return std::numeric_limits<float>::denorm_min() * static_cast<float>(gen() % 1000);
    case 2:
      return std::numeric_limits<float>::max() * ((gen() % 2) ? 1.0f : -1.0f);
    default: {
      float f;
      do {
        f = std::bit_cast<float>(static_cast<uint32_t>(gen()));
      } while (!std::isfinite(f));
      return f;
    }
  }
}

Checkpoint random_checkpoint(std::mt19937_64& gen) {
  static const std::string alphabet = "abcdefghijklmnopqrstuvwxyz0123456789._";
  Checkpoint c;
  const int tensors = static_cast<int>(gen() % 6);
  for (int t = 0; t < tensors; ++t) {
    std::string name;
    const size_t len = 1 + gen() % 12;
    for (size_t i = 0; i < len; ++i) name.push_back(alphabet[gen() % alphabet.size()]);
    Shape shape(gen() % 4);
    for (auto& d : shape) d = static_cast<int64_t>(gen() % 4);
    std::vector<float> data(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : data) x = random_float(gen);
    c.put(name, Tensor(shape, data));
  }
  const int metas = static_cast<int>(gen() % 3);
  for (int m = 0; m < metas; ++m)
    c.set_meta("key" + std::to_string(gen() % 10), "value \"" + std::to_string(gen()) + "\"");
  return c;
}

TEST(Checkpoint, RandomRoundTripsAreBitExact) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 500; ++trial) {
    const Checkpoint c = random_checkpoint(gen);
    const std::string bytes = serialize_checkpoint(c);
    const Checkpoint back = parse_checkpoint(bytes);
    ASSERT_TRUE(back == c) << "trial " << trial;
    for (const auto& [name, t] : c.tensors()) EXPECT_TRUE(back.at(name).bitwise_equal(t));
    EXPECT_EQ(serialize_checkpoint(back), bytes);
    EXPECT_EQ(back.content_hash(), c.content_hash());
  }
}

TEST(Checkpoint, FileRoundTrip) {
  TempDir dir;
  std::mt19937_64 gen(12);
  const Checkpoint c = random_checkpoint(gen);
  const auto path = dir / "x.ckpt";
  const std::string hash = write_checkpoint(c, path);
  EXPECT_EQ(hash, c.content_hash());
  EXPECT_TRUE(read_checkpoint(path) == c);
}

TEST(Checkpoint, LayoutIsCanonical) {
  Checkpoint c;
  c.put("b", Tensor(Shape{2}, {1.0f, 2.0f}));
  c.put("a", Tensor(Shape{1, 1}, {3.0f}));
  c.set_meta("k", "v");
  const std::string bytes = serialize_checkpoint(c);
  uint64_t header_len = 0;
  for (int i = 7; i >= 0; --i)
    header_len = (header_len << 8) | static_cast<unsigned char>(bytes[static_cast<size_t>(i)]);
  const std::string header = bytes.substr(8, header_len);
  EXPECT_EQ(header, R"({"__metadata__":{"k":"v"},"a":{"data_offsets":[0,4],"dtype":"F32","shape":[1,1]},)"
                    R"("b":{"data_offsets":[4,12],"dtype":"F32","shape":[2]}})");
  EXPECT_EQ(bytes.substr(8 + header_len), f32_bytes({3.0f, 1.0f, 2.0f}));
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(c.content_hash(), sha256_hex(bytes));
}

TEST(Checkpoint, EveryByteMutationChangesTheHash) {
  Checkpoint c;
  c.put("w", Tensor(Shape{2, 2}, {1.0f, -2.0f, 0.5f, 4.0f}));
  c.put("b", Tensor(Shape{2}, {0.0f, 1.0f}));
  c.set_meta("seed", "1");
  const std::string bytes = serialize_checkpoint(c);
  const std::string hash = sha256_hex(bytes);
  for (size_t i = 0; i < bytes.size(); ++i) {
    for (unsigned char flip : {0x01, 0x80}) {
      std::string m = bytes;
      m[i] = static_cast<char>(static_cast<unsigned char>(m[i]) ^ flip);
      EXPECT_NE(sha256_hex(m), hash) << "byte " << i;
      try {
        const Checkpoint parsed = parse_checkpoint(m);
        EXPECT_NE(parsed.content_hash(), hash) << "byte " << i << " flip " << int(flip);
      } catch (const Error&) {
        // rejected outright, also fine
      }
    }
  }
}

TEST(Checkpoint, CorruptOffsetsAreRejected) {
  const std::string payload = f32_bytes({1.0f, 2.0f, 3.0f});
  auto header = [](const std::string& tensors) { return "{" + tensors + "}"; };
  const std::string a_ok = R"("a":{"dtype":"F32","shape":[1],"data_offsets":[0,4]})";
  // well-formed control
  EXPECT_NO_THROW(
      parse_checkpoint(assemble(header(a_ok + R"(,"b":{"dtype":"F32","shape":[2],"data_offsets":[4,12]})"), payload)));
  const std::vector<std::string> bad = {
      R"("a":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},"b":{"dtype":"F32","shape":[2],"data_offsets":[4,16]})",
      R"("a":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},"b":{"dtype":"F32","shape":[2],"data_offsets":[0,8]})",
      R"("a":{"dtype":"F32","shape":[1],"data_offsets":[4,8]},"b":{"dtype":"F32","shape":[1],"data_offsets":[8,12]})",
      R"("a":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},"b":{"dtype":"F32","shape":[1],"data_offsets":[4,8]})",
      R"("a":{"dtype":"F32","shape":[1],"data_offsets":[0,8]},"b":{"dtype":"F32","shape":[1],"data_offsets":[8,12]})",
      R"("a":{"dtype":"F32","shape":[1],"data_offsets":[8,4]},"b":{"dtype":"F32","shape":[2],"data_offsets":[4,12]})",
  };
  for (const auto& t : bad)
    EXPECT_TRUE(throws_kind(ErrorKind::CorruptFile, [&] { parse_checkpoint(assemble(header(t), payload)); })) << t;
}

TEST(Checkpoint, HeaderLengthAndJsonErrors) {
  EXPECT_TRUE(throws_kind(ErrorKind::CorruptFile, [] { parse_checkpoint("abc"); }));
  EXPECT_TRUE(throws_kind(ErrorKind::CorruptFile, [] { parse_checkpoint(le64(1000) + "{}"); }));
  EXPECT_TRUE(throws_kind(ErrorKind::FormatError, [] { parse_checkpoint(assemble("{not json", "")); }));
  EXPECT_TRUE(throws_kind(ErrorKind::FormatError, [] { parse_checkpoint(assemble("[1,2]", "")); }));
  EXPECT_TRUE(throws_kind(ErrorKind::FormatError,
                          [] { parse_checkpoint(assemble(R"({"a":{"dtype":"F32","shape":[1]}})", f32_bytes({1}))); }));
  EXPECT_TRUE(throws_kind(ErrorKind::UnsupportedDtype, [] {
    parse_checkpoint(assemble(R"({"a":{"dtype":"I32","shape":[1],"data_offsets":[0,4]}})", f32_bytes({1})));
  }));
  EXPECT_TRUE(
      throws_kind(ErrorKind::FormatError, [] { parse_checkpoint(assemble(R"({"__metadata__":{"k":1}})", "")); }));
  // non-finite payload values are refused
  EXPECT_TRUE(throws_kind(ErrorKind::InvalidValue, [] {
    parse_checkpoint(assemble(R"({"a":{"dtype":"F32","shape":[1],"data_offsets":[0,4]}})", f32_bytes({NAN})));
  }));
  EXPECT_NO_THROW(parse_checkpoint(assemble("{}", "")));
}

TEST(Checkpoint, ReadsWiderAndNarrowerFloatTypes) {
  std::string f64;
  for (double d : {1.5, -2.0}) {
    const auto bits = std::bit_cast<uint64_t>(d);
    for (int i = 0; i < 8; ++i) f64.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  const std::string f16 = std::string("\x00\x3c", 2) + std::string("\x00\xc0", 2);  // 1.0, -2.0
  const std::string bf16 = std::string("\xc0\x3f", 2);                              // 1.5
  const std::string header = R"({"a":{"dtype":"F64","shape":[2],"data_offsets":[0,16]},)"
                             R"("b":{"dtype":"F16","shape":[2],"data_offsets":[16,20]},)"
                             R"("c":{"dtype":"BF16","shape":[1],"data_offsets":[20,22]}})";
  const Checkpoint c = parse_checkpoint(assemble(header, f64 + f16 + bf16));
  EXPECT_EQ(c.at("a").data()[0], 1.5f);
  EXPECT_EQ(c.at("a").data()[1], -2.0f);
  EXPECT_EQ(c.at("b").data()[0], 1.0f);
  EXPECT_EQ(c.at("b").data()[1], -2.0f);
  EXPECT_EQ(c.at("c").data()[0], 1.5f);
}

TEST(Checkpoint, IoErrorsNameThePath) {
  try {
    read_checkpoint("/nonexistent/dir/model.ckpt");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IoError);
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/model.ckpt"), std::string::npos);
  }
  TempDir dir;
  const auto path = dir / "broken.ckpt";
  std::ofstream(path) << "xy";
  try {
    read_checkpoint(path);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CorruptFile);
    EXPECT_NE(std::string(e.what()).find("broken.ckpt"), std::string::npos);
  }
}

TEST(Checkpoint, NameValidation) {
  Checkpoint c;
  EXPECT_TRUE(throws_kind(ErrorKind::InvalidValue, [&] { c.put("", Tensor(Shape{1}, {1.0f})); }));
  EXPECT_TRUE(throws_kind(ErrorKind::InvalidValue, [&] { c.put("__metadata__", Tensor(Shape{1}, {1.0f})); }));
  EXPECT_TRUE(throws_kind(ErrorKind::InvalidValue, [&] { c.put("has space", Tensor(Shape{1}, {1.0f})); }));
  EXPECT_TRUE(throws_kind(ErrorKind::IncompatibleCheckpoints, [&] { c.at("missing"); }));
}

Checkpoint tensors_only(const Checkpoint& c) {
  Checkpoint out;
  for (const auto& [name, t] : c.tensors()) out.put(name, t);
  return out;
}

TEST(DiffCheckpoints, ListsPartitionTheUnion) {
  std::mt19937_64 gen(13);
  for (int trial = 0; trial < 200; ++trial) {
    const Checkpoint a = random_checkpoint(gen);
    Checkpoint b = gen() % 2 ? a : random_checkpoint(gen);
    if (!b.tensors().empty() && gen() % 2) {
      const auto name = b.names().front();
      const Tensor& t = b.at(name);
      std::vector<float> d(t.data().begin(), t.data().end());
      if (!d.empty()) d[0] = d[0] == 1.0f ? 2.0f : 1.0f;
      b.put(name, Tensor(t.shape(), d));
    }
    const DiffReport r = diff_checkpoints(a, b);
    std::multiset<std::string> listed(r.only_in_a.begin(), r.only_in_a.end());
    listed.insert(r.only_in_b.begin(), r.only_in_b.end());
    listed.insert(r.value_equal.begin(), r.value_equal.end());
    for (const auto& s : r.shape_mismatch) listed.insert(s.name);
    for (const auto& v : r.value_diff) listed.insert(v.name);
    std::set<std::string> all;
    for (const auto& n : a.names()) all.insert(n);
    for (const auto& n : b.names()) all.insert(n);
    EXPECT_EQ(listed.size(), all.size());
    EXPECT_EQ(std::set<std::string>(listed.begin(), listed.end()), all);
    EXPECT_EQ(r.identical(), tensors_only(a) == tensors_only(b));
  }
}

TEST(DiffCheckpoints, ReportsMaxAbsDifference) {
  Checkpoint a, b;
  a.put("x", Tensor(Shape{3}, {1.0f, 2.0f, 3.0f}));
  b.put("x", Tensor(Shape{3}, {1.0f, 2.5f, 1.0f}));
  a.put("y", Tensor(Shape{1}, {0.0f}));
  b.put("y", Tensor(Shape{2}, {0.0f, 0.0f}));
  a.put("z", Tensor(Shape{1}, {0.0f}));
  const DiffReport r = diff_checkpoints(a, b);
  ASSERT_EQ(r.value_diff.size(), 1u);
  EXPECT_EQ(r.value_diff[0].max_abs_diff, 2.0);
  ASSERT_EQ(r.shape_mismatch.size(), 1u);
  EXPECT_EQ(r.shape_mismatch[0].name, "y");
  EXPECT_EQ(r.only_in_a, std::vector<std::string>{"z"});
  EXPECT_FALSE(r.identical());
}

}  // namespace
}  // namespace pft
