#include "pft/tensor.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "pft/error.hpp"

namespace pft {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t extent : shape) {
    if (extent < 0) fail(ErrorKind::InvalidValue, "negative extent in shape " + shape_to_string(shape));
    if (extent != 0 && n > std::numeric_limits<int64_t>::max() / extent)
      fail(ErrorKind::InvalidValue, "shape " + shape_to_string(shape) + " overflows");
    n *= extent;
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, std::vector<float> data, std::string name)
    : shape_(std::move(shape)), data_(std::move(data)), name_(std::move(name)) {
  const int64_t n = shape_numel(shape_);
  if (n != static_cast<int64_t>(data_.size())) {
    fail(ErrorKind::DimensionMismatch, "tensor '" + name_ + "' shape " + shape_to_string(shape_) + " needs " +
                                           std::to_string(n) + " values, got " + std::to_string(data_.size()));
  }
  for (size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i]))
      fail(ErrorKind::InvalidValue, "tensor '" + name_ + "' has non-finite value at index " + std::to_string(i));
  }
}

Tensor Tensor::zeros(Shape shape, std::string name) {
  const auto n = static_cast<size_t>(shape_numel(shape));
  return Tensor(std::move(shape), std::vector<float>(n, 0.0f), std::move(name));
}

Tensor Tensor::from_doubles(Shape shape, std::span<const double> values, std::string name) {
  std::vector<float> data(values.size());
  for (size_t i = 0; i < values.size(); ++i) data[i] = static_cast<float>(values[i]);
  return Tensor(std::move(shape), std::move(data), std::move(name));
}

Tensor Tensor::renamed(std::string name) const {
  Tensor t = *this;
  t.name_ = std::move(name);
  return t;
}

bool Tensor::bitwise_equal(const Tensor& other) const noexcept {
  return shape_ == other.shape_ && data_.size() == other.data_.size() &&
         (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
}

}  // namespace pft
