#pragma once

#include <cstdint>
#include <random>

namespace einn {

/// Mixes a base seed and a stream id into an independent 64-bit seed.
/// Distinct (seed, stream) pairs give statistically independent engines,
/// which is how every sampler in the project splits its randomness.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Deterministic random source: mt19937_64 underneath, Box-Muller normals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t stream) : engine_(derive_seed(seed, stream)) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1).
  double uniform_open();
  /// Standard normal.
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace einn
