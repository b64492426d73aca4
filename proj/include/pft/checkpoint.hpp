#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pft/tensor.hpp"

namespace pft {

// Metadata keys written by this toolkit.
namespace meta {
inline constexpr std::string_view kArchId = "pft.arch_id";
inline constexpr std::string_view kArchDims = "pft.arch_dims";
inline constexpr std::string_view kSeed = "pft.seed";
inline constexpr std::string_view kEpoch = "pft.epoch";
inline constexpr std::string_view kProducer = "pft.producer";
}  // namespace meta

bool is_valid_tensor_name(std::string_view name);

// Named tensors plus string metadata. Tensors are kept sorted by name, which
// is also the canonical serialization order.
class Checkpoint {
 public:
  using TensorMap = std::map<std::string, Tensor, std::less<>>;
  using Metadata = std::map<std::string, std::string, std::less<>>;

  Checkpoint() = default;

  // Inserts or replaces; validates the name.
  void put(std::string name, Tensor tensor);
  void set_meta(std::string key, std::string value);

  const TensorMap& tensors() const noexcept { return tensors_; }
  const Metadata& metadata() const noexcept { return metadata_; }

  bool contains(std::string_view name) const { return tensors_.find(name) != tensors_.end(); }
  // Throws IncompatibleCheckpoints if absent.
  const Tensor& at(std::string_view name) const;
  const std::string* find_meta(std::string_view key) const;

  std::vector<std::string> names() const;
  int64_t total_scalars() const;

  // Lowercase hex SHA-256 of the canonical serialized bytes.
  std::string content_hash() const;

  friend bool operator==(const Checkpoint& a, const Checkpoint& b);

 private:
  TensorMap tensors_;
  Metadata metadata_;
};

// Canonical bytes: u64 LE header length, compact sorted-key JSON header,
// little-endian F32 payload in name order.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);

Checkpoint read_checkpoint(const std::filesystem::path& path);
// Returns the content hash of what was written.
std::string write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);

struct ShapeMismatch {
  std::string name;
  Shape shape_a;
  Shape shape_b;
};

struct ValueDiff {
  std::string name;
  double max_abs_diff = 0.0;
};

// The five lists partition the union of tensor names.
struct DiffReport {
  std::vector<std::string> only_in_a;
  std::vector<std::string> only_in_b;
  std::vector<ShapeMismatch> shape_mismatch;
  std::vector<std::string> value_equal;
  std::vector<ValueDiff> value_diff;

  bool identical() const {
    return only_in_a.empty() && only_in_b.empty() && shape_mismatch.empty() && value_diff.empty();
  }
};

DiffReport diff_checkpoints(const Checkpoint& a, const Checkpoint& b);

}  // namespace pft
