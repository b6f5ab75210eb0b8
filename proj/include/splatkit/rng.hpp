#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace splat {

/// Deterministic RNG. The raw engine is std::mt19937_64 but all value
/// transforms are explicit, so identical seeds give identical streams on any
/// standard library (uniform_real_distribution et al. are
/// implementation-defined and would break bitwise reproducibility).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n) {
    // Rejection-free modulo is biased for huge n; n here is always tiny
    // relative to 2^64 so the bias is immaterial, but keep it exact anyway.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  /// Standard normal via Box-Muller (explicit, not std::normal_distribution).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  /// Derive an independent child seed (for per-region / per-call streams).
  std::uint64_t derive_seed() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Canonical standard-normal buffer shared by the SDS caller and the
/// "perfect" denoiser: both sides regenerate the identical float32 noise
/// from the request seed. Values are float so the echo is bit-exact.
inline std::vector<float> standard_normal_f32(std::uint64_t seed, std::size_t count) {
  Rng rng(seed);
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = static_cast<float>(rng.normal());
  return out;
}

}  // namespace splat
