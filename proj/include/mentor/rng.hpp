#ifndef MENTOR_RNG_HPP_
#define MENTOR_RNG_HPP_

#include <cstdint>
#include <random>

namespace mentor {

/// SplitMix64 finalizer, used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t combine_seeds(std::uint64_t a, std::uint64_t b);

/// Deterministic random source. Draws are defined bit-for-bit on top of
/// mt19937_64 so results do not depend on the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix_seed(seed)), seed_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer on [0, n). n must be positive.
  std::uint64_t index(std::uint64_t n);

  /// Independent child stream; the same (seed, stream) always gives the same child.
  Rng split(std::uint64_t stream) const { return Rng(combine_seeds(seed_, stream)); }

  std::uint64_t seed() const { return seed_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace mentor

#endif  // MENTOR_RNG_HPP_
