#pragma once

#include <cstdint>

#include "core/matrix.hpp"

namespace must {

/// Deterministic splitmix64 stream (Steele, Lea & Flood's published
/// constants). The integer stream is platform-exact; normal draws use a
/// Box-Muller transform and therefore also depend on the toolchain's
/// log/cos rounding, which is fixed for a given build.
///
/// One stream is single-owner mutable state. Parallel work derives
/// independent streams via derive_stream().
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64();

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform();

  /// Uniform integer in [0, n). Lemire multiply-shift, consumes one draw.
  int64_t uniform_int(int64_t n);

  /// One Gaussian draw: z = sqrt(-2 ln u1) * cos(2 pi u2) with u1 in (0,1],
  /// u2 in [0,1). Consumes exactly two uniform draws.
  double normal(double mean, double stddev);

  Matrix normal_matrix(int64_t rows, int64_t cols, double mean, double stddev);

  /// Seed for an independent stream; two rounds of the splitmix64 finalizer
  /// over (seed, salt) so sibling streams never collide in practice.
  static uint64_t derive_stream(uint64_t seed, uint64_t salt);

 private:
  uint64_t state_;
};

}  // namespace must
