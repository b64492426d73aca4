#include "pft/checkpoint.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <limits>

#include "pft/error.hpp"

namespace pft {

using nlohmann::json;

bool is_valid_tensor_name(std::string_view name) {
  if (name.empty() || name == "__metadata__") return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return u > 0x20 && u < 0x7f;
  });
}

void Checkpoint::put(std::string name, Tensor tensor) {
  if (!is_valid_tensor_name(name)) fail(ErrorKind::InvalidValue, "invalid tensor name '" + name + "'");
  Tensor named = tensor.renamed(name);
  tensors_.insert_or_assign(std::move(name), std::move(named));
}

void Checkpoint::set_meta(std::string key, std::string value) {
  metadata_.insert_or_assign(std::move(key), std::move(value));
}

const Tensor& Checkpoint::at(std::string_view name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) fail(ErrorKind::IncompatibleCheckpoints, "missing tensor '" + std::string(name) + "'");
  return it->second;
}

const std::string* Checkpoint::find_meta(std::string_view key) const {
  auto it = metadata_.find(key);
  return it == metadata_.end() ? nullptr : &it->second;
}

std::vector<std::string> Checkpoint::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (const auto& [name, _] : tensors_) out.push_back(name);
  return out;
}

int64_t Checkpoint::total_scalars() const {
  int64_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.numel();
  return n;
}

std::string Checkpoint::content_hash() const { return sha256_hex(serialize_checkpoint(*this)); }

bool operator==(const Checkpoint& a, const Checkpoint& b) {
  if (a.metadata_ != b.metadata_ || a.tensors_.size() != b.tensors_.size()) return false;
  auto ib = b.tensors_.begin();
  for (const auto& [name, t] : a.tensors_) {
    if (name != ib->first || !t.bitwise_equal(ib->second)) return false;
    ++ib;
  }
  return true;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorKind::IoError, "SHA-256 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

namespace {

void append_u64_le(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t load_le(const unsigned char* p, int bytes) {
  uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

float half_to_float(uint16_t h) {
  const uint32_t sign = (h >> 15) & 1u;
  const uint32_t exp = (h >> 10) & 0x1fu;
  const uint32_t mant = h & 0x3ffu;
  float value;
  if (exp == 0) {
    value = std::ldexp(static_cast<float>(mant), -24);
  } else if (exp == 31) {
    value = mant ? std::numeric_limits<float>::quiet_NaN() : std::numeric_limits<float>::infinity();
  } else {
    value = std::ldexp(static_cast<float>(mant | 0x400u), static_cast<int>(exp) - 25);
  }
  return sign ? -value : value;
}

struct DtypeInfo {
  std::string_view name;
  int bytes;
};

constexpr DtypeInfo kDtypes[] = {{"F32", 4}, {"F64", 8}, {"F16", 2}, {"BF16", 2}};

float decode_scalar(std::string_view dtype, const unsigned char* p) {
  if (dtype == "F32") return std::bit_cast<float>(static_cast<uint32_t>(load_le(p, 4)));
  if (dtype == "F64") return static_cast<float>(std::bit_cast<double>(load_le(p, 8)));
  if (dtype == "F16") return half_to_float(static_cast<uint16_t>(load_le(p, 2)));
  return std::bit_cast<float>(static_cast<uint32_t>(load_le(p, 2)) << 16);  // BF16
}

struct HeaderEntry {
  std::string name;
  std::string dtype;
  int bytes = 0;
  Shape shape;
  uint64_t begin = 0;
  uint64_t end = 0;
};

uint64_t as_offset(const json& j, const std::string& name) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<int64_t>() >= 0))
    fail(ErrorKind::FormatError, "tensor '" + name + "': data_offsets must be non-negative integers");
  return j.get<uint64_t>();
}

HeaderEntry parse_entry(const std::string& name, const json& j) {
  if (!is_valid_tensor_name(name)) fail(ErrorKind::FormatError, "invalid tensor name '" + name + "'");
  if (!j.is_object()) fail(ErrorKind::FormatError, "tensor '" + name + "': entry is not an object");
  HeaderEntry e;
  e.name = name;
  auto dtype = j.find("dtype");
  auto shape = j.find("shape");
  auto offsets = j.find("data_offsets");
  if (dtype == j.end() || !dtype->is_string() || shape == j.end() || !shape->is_array() || offsets == j.end() ||
      !offsets->is_array() || offsets->size() != 2)
    fail(ErrorKind::FormatError, "tensor '" + name + "': needs dtype, shape and two data_offsets");
  e.dtype = dtype->get<std::string>();
  auto info =
      std::find_if(std::begin(kDtypes), std::end(kDtypes), [&](const DtypeInfo& d) { return d.name == e.dtype; });
  if (info == std::end(kDtypes)) fail(ErrorKind::UnsupportedDtype, "tensor '" + name + "': dtype " + e.dtype);
  e.bytes = info->bytes;
  for (const json& extent : *shape) {
    if (!extent.is_number_integer() || extent.get<int64_t>() < 0)
      fail(ErrorKind::FormatError, "tensor '" + name + "': shape extents must be non-negative integers");
    e.shape.push_back(extent.get<int64_t>());
  }
  e.begin = as_offset((*offsets)[0], name);
  e.end = as_offset((*offsets)[1], name);
  return e;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  json header = json::object();
  if (!ckpt.metadata().empty()) {
    json m = json::object();
    for (const auto& [k, v] : ckpt.metadata()) m[k] = v;
    header["__metadata__"] = std::move(m);
  }
  uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors()) {
    const uint64_t bytes = static_cast<uint64_t>(t.numel()) * 4;
    header[name] = {{"dtype", "F32"}, {"shape", t.shape()}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  const std::string text = header.dump();
  std::string out;
  out.reserve(8 + text.size() + offset);
  append_u64_le(out, text.size());
  out += text;
  for (const auto& [_, t] : ckpt.tensors()) {
    for (float x : t.data()) {
      const auto bits = std::bit_cast<uint32_t>(x);
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
  }
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < 8) fail(ErrorKind::CorruptFile, "file shorter than the 8-byte header length");
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const uint64_t header_len = load_le(raw, 8);
  if (header_len > bytes.size() - 8)
    fail(ErrorKind::CorruptFile,
         "header length " + std::to_string(header_len) + " exceeds file size " + std::to_string(bytes.size()));
  json header;
  try {
    header = json::parse(bytes.substr(8, header_len));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::FormatError, std::string("header is not valid JSON: ") + e.what());
  }
  if (!header.is_object()) fail(ErrorKind::FormatError, "header is not a JSON object");

  Checkpoint ckpt;
  std::vector<HeaderEntry> entries;
  for (const auto& [key, value] : header.items()) {
    if (key == "__metadata__") {
      if (!value.is_object()) fail(ErrorKind::FormatError, "__metadata__ is not an object");
      for (const auto& [mk, mv] : value.items()) {
        if (!mv.is_string()) fail(ErrorKind::FormatError, "metadata value for '" + mk + "' is not a string");
        ckpt.set_meta(mk, mv.get<std::string>());
      }
      continue;
    }
    entries.push_back(parse_entry(key, value));
  }

  const uint64_t payload_size = bytes.size() - 8 - header_len;
  std::sort(entries.begin(), entries.end(), [](const HeaderEntry& a, const HeaderEntry& b) {
    return a.begin != b.begin ? a.begin < b.begin : a.end < b.end;
  });
  uint64_t cursor = 0;
  for (const HeaderEntry& e : entries) {
    if (e.end < e.begin || e.end > payload_size)
      fail(ErrorKind::CorruptFile, "tensor '" + e.name + "': offsets out of bounds");
    if (e.begin != cursor)
      fail(ErrorKind::CorruptFile, "tensor '" + e.name + "': " + (e.begin < cursor ? "overlapping" : "gap before") +
                                       " data at offset " + std::to_string(e.begin));
    const uint64_t numel = static_cast<uint64_t>(shape_numel(e.shape));
    if (e.end - e.begin != numel * static_cast<uint64_t>(e.bytes))
      fail(ErrorKind::CorruptFile,
           "tensor '" + e.name + "': byte span does not match shape " + shape_to_string(e.shape));
    cursor = e.end;
  }
  if (cursor != payload_size) fail(ErrorKind::CorruptFile, "trailing bytes after the last tensor");

  const unsigned char* payload = raw + 8 + header_len;
  for (const HeaderEntry& e : entries) {
    const auto numel = static_cast<size_t>(e.end - e.begin) / e.bytes;
    std::vector<float> data(numel);
    for (size_t i = 0; i < numel; ++i) data[i] = decode_scalar(e.dtype, payload + e.begin + i * e.bytes);
    ckpt.put(e.name, Tensor(e.shape, std::move(data), e.name));
  }
  return ckpt;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_checkpoint(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::string write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::IoError, "short write to " + path.string());
  return sha256_hex(bytes);
}

DiffReport diff_checkpoints(const Checkpoint& a, const Checkpoint& b) {
  DiffReport report;
  for (const auto& [name, ta] : a.tensors()) {
    auto it = b.tensors().find(name);
    if (it == b.tensors().end()) {
      report.only_in_a.push_back(name);
      continue;
    }
    const Tensor& tb = it->second;
    if (ta.shape() != tb.shape()) {
      report.shape_mismatch.push_back({name, ta.shape(), tb.shape()});
    } else if (ta.bitwise_equal(tb)) {
      report.value_equal.push_back(name);
    } else {
      double max_diff = 0.0;
      const auto da = ta.data();
      const auto db = tb.data();
      for (size_t i = 0; i < da.size(); ++i)
        max_diff = std::max(max_diff, std::abs(static_cast<double>(da[i]) - static_cast<double>(db[i])));
      report.value_diff.push_back({name, max_diff});
    }
  }
  for (const auto& [name, _] : b.tensors()) {
    if (!a.contains(name)) report.only_in_b.push_back(name);
  }
  return report;
}

}  // namespace pft
