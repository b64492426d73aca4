#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pft {

using Shape = std::vector<int64_t>;

// Number of elements described by a shape; throws InvalidValue on negative
// extents or overflow.
int64_t shape_numel(const Shape& shape);

std::string shape_to_string(const Shape& shape);

// Dense row-major tensor stored at 32-bit precision. Immutable once built;
// every scalar is checked finite at construction.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> data, std::string name = {});

  static Tensor zeros(Shape shape, std::string name = {});
  // Rounds each value to storage precision.
  static Tensor from_doubles(Shape shape, std::span<const double> values, std::string name = {});

  const Shape& shape() const noexcept { return shape_; }
  std::span<const float> data() const noexcept { return data_; }
  const std::string& name() const noexcept { return name_; }
  int64_t numel() const noexcept { return static_cast<int64_t>(data_.size()); }

  Tensor renamed(std::string name) const;

  // Bitwise comparison of shape and data; names are ignored.
  bool bitwise_equal(const Tensor& other) const noexcept;

 private:
  Shape shape_;
  std::vector<float> data_;
  std::string name_;
};

}  // namespace pft
