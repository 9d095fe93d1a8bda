#include "samlab/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace samlab {

namespace {

// splitmix64 finalizer; also reused as the seed/stream mixer.
std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t sm = seed ^ derive_seed(0x8000000000000000ull, stream);
  for (auto& word : state_) word = splitmix64_next(sm);
  // All-zero xoshiro state is invalid; splitmix64 output makes it
  // astronomically unlikely, but guard anyway.
  if (state_[0] == 0 && state_[1] == 0 && state_[2] == 0 && state_[3] == 0) state_[0] = 1;
}

std::uint64_t Rng::next_u64() {
  // xoshiro256++
  const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform_open() {
  return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::next_below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::next_below: n must be positive");
  return next_u64() % n;
}

bool Rng::bernoulli(double p) { return uniform() < p; }

std::pair<double, double> Rng::normal_pair() {
  const double u1 = uniform_open();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

void Rng::fill_normal(std::span<double> out, double mean, double sd) {
  std::size_t i = 0;
  while (i < out.size()) {
    const auto [z0, z1] = normal_pair();
    out[i++] = mean + sd * z0;
    if (i < out.size()) out[i++] = mean + sd * z1;
  }
}

std::uint64_t Rng::derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t sm = master;
  (void)splitmix64_next(sm);
  sm ^= 0xD1B54A32D192ED03ull * (index + 1);
  return splitmix64_next(sm);
}

}  // namespace samlab
