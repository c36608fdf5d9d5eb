#include "core/rng.hpp"

#include <cmath>
#include <numbers>

namespace must {

namespace {

constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;

uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

uint64_t Rng::next_u64() {
  state_ += kGolden;
  return mix64(state_);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

int64_t Rng::uniform_int(int64_t n) {
  if (n <= 0) {
    fail(ErrorCode::invalid_argument, "uniform_int: n must be positive, got ",
         n);
  }
  unsigned __int128 wide = static_cast<unsigned __int128>(next_u64()) *
                           static_cast<unsigned __int128>(n);
  return static_cast<int64_t>(wide >> 64);
}

double Rng::normal(double mean, double stddev) {
  if (stddev < 0.0 || !std::isfinite(stddev) || !std::isfinite(mean)) {
    fail(ErrorCode::invalid_argument, "normal: bad mean/std (", mean, ", ",
         stddev, ")");
  }
  // u1 mapped to (0,1] so the log is always finite.
  double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  double z = std::sqrt(-2.0 * std::log(u1)) *
             std::cos(2.0 * std::numbers::pi * u2);
  return mean + stddev * z;
}

Matrix Rng::normal_matrix(int64_t rows, int64_t cols, double mean,
                          double stddev) {
  Matrix out(rows, cols);
  for (double& v : out.data()) v = normal(mean, stddev);
  out.ensure_finite("normal_matrix");
  return out;
}

uint64_t Rng::derive_stream(uint64_t seed, uint64_t salt) {
  return mix64(mix64(seed + kGolden * (salt + 1)) + kGolden);
}

}  // namespace must
