#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>

namespace samlab {

/// Deterministic 64-bit generator used everywhere randomness is needed.
///
/// Core generator: xoshiro256++, seeded from a splitmix64 expansion of
/// (seed, stream).  Streams with distinct ids are statistically independent,
/// which is how parallel sweep children and the per-run substreams (data,
/// init, shuffle, attack) stay decoupled.  Normal variates come from the
/// Box-Muller transform of two uniforms, so every draw consumes a fixed
/// number of generator words and sequences reproduce exactly for a given
/// (seed, stream).
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();

  /// Uniform on [0, 1), 53-bit resolution.
  double uniform();

  /// Uniform on (0, 1]; safe as a log() argument.
  double uniform_open();

  double uniform(double lo, double hi);

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t next_below(std::uint64_t n);

  bool bernoulli(double p);

  /// One Box-Muller pair of independent standard normals.
  std::pair<double, double> normal_pair();

  /// Fills out with N(mean, sd) variates; draws ceil(n/2) Box-Muller pairs
  /// and discards the spare half for odd n.
  void fill_normal(std::span<double> out, double mean, double sd);

  /// Stable child-seed derivation: hash of (master, index). Used for sweep
  /// children and per-run substreams.
  static std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

 private:
  std::array<std::uint64_t, 4> state_;
};

}  // namespace samlab
