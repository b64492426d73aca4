#pragma once

#include <optional>
#include <span>
#include <vector>

#include "pft/tensor.hpp"

namespace pft {

// Streams dot product and squared norms of two vectors in 64-bit, in the
// order the chunks are added. Feeding the pieces of a concatenation in order
// yields the same bits as a single call over the concatenated vectors.
class AngleAccumulator {
 public:
  void add(std::span<const float> u, std::span<const float> v);
  void add(std::span<const double> u, std::span<const double> v);

  size_t size() const noexcept { return count_; }

  // Angle in [0, pi]. Throws DegenerateVector for a zero norm and
  // DimensionMismatch when nothing was added.
  double angle() const;

 private:
  template <typename T>
  void add_impl(std::span<const T> u, std::span<const T> v);

  double dot_ = 0.0;
  double norm_u_ = 0.0;
  double norm_v_ = 0.0;
  size_t count_ = 0;
};

// arccos of the cosine similarity, cosine clamped to [-1, 1].
double vec_angle(std::span<const double> u, std::span<const double> v);
double vec_angle(std::span<const float> u, std::span<const float> v);

// Kendall tau-b with tie correction. Larger value = larger angle, though the
// statistic only depends on orderings.
double kendall_tau(std::span<const double> a, std::span<const double> b);

// Elementwise weighted mean with 64-bit accumulation in input order. Uniform
// weights when `weights` is empty.
Tensor mean_stack(std::span<const Tensor> tensors, std::span<const double> weights = {});

}  // namespace pft
