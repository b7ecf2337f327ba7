#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace etomo {

/// SplitMix64 finalizer; used to derive independent per-item seeds.
std::uint64_t mix64(std::uint64_t x);

/// Seed for item `index` of the named stream under `master`.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t index = 0);

/// Seeded generator whose draws are bit-identical across standard libraries
/// (the distributions are implemented here instead of using <random>'s
/// implementation-defined ones).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  long long integer(long long lo, long long hi);
  double normal();

  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace etomo
