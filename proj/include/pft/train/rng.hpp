#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace pft::train {

// mt19937_64 with hand-rolled transforms: std distributions are
// implementation-defined, these are not.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  // Independent seed for a named sub-stream.
  static uint64_t derive(uint64_t seed, uint64_t stream);

  uint64_t next() { return engine_(); }
  double uniform();  // [0, 1)
  double normal();
  // Normal with standard deviation `std`, resampled outside +-2 std.
  double trunc_normal(double std);
  size_t index(size_t n);  // uniform in [0, n)

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pft::train
