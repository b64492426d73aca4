#include "pft/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "pft/error.hpp"

namespace pft {

template <typename T>
void AngleAccumulator::add_impl(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) {
    fail(ErrorKind::DimensionMismatch,
         "vector lengths differ: " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  }
  for (size_t i = 0; i < u.size(); ++i) {
    const double a = u[i];
    const double b = v[i];
    if (!std::isfinite(a) || !std::isfinite(b))
      fail(ErrorKind::InvalidValue, "non-finite entry at index " + std::to_string(count_ + i));
    dot_ += a * b;
    norm_u_ += a * a;
    norm_v_ += b * b;
  }
  count_ += u.size();
}

void AngleAccumulator::add(std::span<const float> u, std::span<const float> v) { add_impl(u, v); }
void AngleAccumulator::add(std::span<const double> u, std::span<const double> v) { add_impl(u, v); }

double AngleAccumulator::angle() const {
  if (count_ == 0) fail(ErrorKind::DimensionMismatch, "angle of empty vectors");
  if (norm_u_ == 0.0 || norm_v_ == 0.0) fail(ErrorKind::DegenerateVector, "zero-norm vector");
  // sqrt(x*x) == x exactly, so identical inputs give cosine exactly 1.
  double denom = std::sqrt(norm_u_ * norm_v_);
  if (!std::isfinite(denom) || denom == 0.0) denom = std::sqrt(norm_u_) * std::sqrt(norm_v_);
  const double cosine = std::clamp(dot_ / denom, -1.0, 1.0);
  return std::acos(cosine);
}

double vec_angle(std::span<const double> u, std::span<const double> v) {
  // Squares of doubles above ~1e154 overflow. Rescaling by a power of two is
  // exact, so the angle is unchanged.
  double peak = 0.0;
  for (double x : u) peak = std::max(peak, std::abs(x));
  for (double x : v) peak = std::max(peak, std::abs(x));
  AngleAccumulator acc;
  if (std::isfinite(peak) && peak > 0x1p500) {
    const double scale = std::ldexp(1.0, -std::ilogb(peak));
    std::vector<double> us(u.begin(), u.end()), vs(v.begin(), v.end());
    for (double& x : us) x *= scale;
    for (double& x : vs) x *= scale;
    acc.add(std::span<const double>(us), std::span<const double>(vs));
  } else {
    acc.add(u, v);
  }
  return acc.angle();
}

double vec_angle(std::span<const float> u, std::span<const float> v) {
  AngleAccumulator acc;
  acc.add(u, v);
  return acc.angle();
}

namespace {

// Number of tied pairs among runs of equal values in a sorted sequence.
template <typename It, typename Eq>
int64_t tied_pairs(It first, It last, Eq eq) {
  int64_t pairs = 0;
  while (first != last) {
    It run_end = std::next(first);
    while (run_end != last && eq(*first, *run_end)) ++run_end;
    const int64_t len = std::distance(first, run_end);
    pairs += len * (len - 1) / 2;
    first = run_end;
  }
  return pairs;
}

// Merge sort counting inversions (strictly greater before smaller).
int64_t sort_count_swaps(std::vector<double>& values, std::vector<double>& scratch, size_t lo, size_t hi) {
  if (hi - lo < 2) return 0;
  const size_t mid = lo + (hi - lo) / 2;
  int64_t swaps = sort_count_swaps(values, scratch, lo, mid) + sort_count_swaps(values, scratch, mid, hi);
  size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (values[j] < values[i]) {
      swaps += static_cast<int64_t>(mid - i);
      scratch[k++] = values[j++];
    } else {
      scratch[k++] = values[i++];
    }
  }
  while (i < mid) scratch[k++] = values[i++];
  while (j < hi) scratch[k++] = values[j++];
  std::copy(scratch.begin() + lo, scratch.begin() + hi, values.begin() + lo);
  return swaps;
}

}  // namespace

// Knight's O(n log n) algorithm.
double kendall_tau(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    fail(ErrorKind::DimensionMismatch,
         "ranking lengths differ: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  if (a.size() < 2) fail(ErrorKind::DimensionMismatch, "kendall tau needs at least 2 entries");
  for (size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
      fail(ErrorKind::InvalidValue, "non-finite ranking entry at index " + std::to_string(i));
  }

  const auto n = static_cast<int64_t>(a.size());
  std::vector<size_t> order(a.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t i, size_t j) { return a[i] != a[j] ? a[i] < a[j] : b[i] < b[j]; });

  const int64_t ties_a = tied_pairs(order.begin(), order.end(), [&](size_t i, size_t j) { return a[i] == a[j]; });
  const int64_t ties_joint =
      tied_pairs(order.begin(), order.end(), [&](size_t i, size_t j) { return a[i] == a[j] && b[i] == b[j]; });

  std::vector<double> sorted_b(a.size());
  for (size_t i = 0; i < order.size(); ++i) sorted_b[i] = b[order[i]];
  std::vector<double> scratch(sorted_b.size());
  const int64_t swaps = sort_count_swaps(sorted_b, scratch, 0, sorted_b.size());
  const int64_t ties_b = tied_pairs(sorted_b.begin(), sorted_b.end(), std::equal_to<double>{});

  const int64_t total = n * (n - 1) / 2;
  // concordant - discordant = total - ties_a - ties_b + ties_joint - 2*swaps
  const int64_t score = total - ties_a - ties_b + ties_joint - 2 * swaps;
  const int64_t untied_a = total - ties_a;
  const int64_t untied_b = total - ties_b;
  if (untied_a == 0 || untied_b == 0) fail(ErrorKind::DegenerateRanking, "ranking with every entry tied");
  return static_cast<double>(score) / std::sqrt(static_cast<double>(untied_a) * static_cast<double>(untied_b));
}

Tensor mean_stack(std::span<const Tensor> tensors, std::span<const double> weights) {
  if (tensors.empty()) fail(ErrorKind::EmptyInput, "mean_stack of zero tensors");
  if (!weights.empty() && weights.size() != tensors.size())
    fail(ErrorKind::DimensionMismatch,
         "got " + std::to_string(weights.size()) + " weights for " + std::to_string(tensors.size()) + " tensors");
  const Shape& shape = tensors.front().shape();
  for (const Tensor& t : tensors) {
    if (t.shape() != shape)
      fail(ErrorKind::DimensionMismatch, "shape " + shape_to_string(t.shape()) + " vs " + shape_to_string(shape));
  }
  double weight_sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) fail(ErrorKind::InvalidValue, "weights must be finite and non-negative");
    weight_sum += w;
  }
  if (weights.empty()) weight_sum = static_cast<double>(tensors.size());
  if (weight_sum <= 0.0) fail(ErrorKind::InvalidValue, "weights sum to zero");

  const auto n = static_cast<size_t>(tensors.front().numel());
  // Seeded with the first term rather than +0.0 so negative zeros survive.
  std::vector<double> acc(n);
  for (size_t k = 0; k < tensors.size(); ++k) {
    const double w = weights.empty() ? 1.0 : weights[k];
    const auto data = tensors[k].data();
    for (size_t i = 0; i < n; ++i) {
      const double term = w * static_cast<double>(data[i]);
      acc[i] = k == 0 ? term : acc[i] + term;
    }
  }
  for (double& x : acc) x /= weight_sum;
  return Tensor::from_doubles(shape, acc, tensors.front().name());
}

}  // namespace pft
