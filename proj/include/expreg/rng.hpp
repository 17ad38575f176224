#pragma once

#include <cstdint>
#include <random>

namespace expreg {

/// Seed streams. Each consumer of randomness draws from its own stream so that
/// adding a consumer never shifts the draws of another one.
enum class Stream : std::uint32_t {
  dataset = 1,
  init = 2,
  monte_carlo = 3,
  perturbation = 4,
  trial = 5,
  labels = 6,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Per-purpose seed: splitmix64(master ^ splitmix64((stream << 32) | index)).
std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint32_t index = 0);

/// Reproducible generator. The engine is mt19937_64 (fully specified by the
/// standard); uniform and Gaussian transforms are written out here so the
/// produced values do not depend on the standard library vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1].
  double uniform_open_closed() { return 1.0 - uniform(); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via the Marsaglia polar method.
  double normal();
  /// +1 or -1 with equal probability.
  double sign();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace expreg
