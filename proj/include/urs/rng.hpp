#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace urs {

// Portable 64-bit generator (xoshiro256** seeded through SplitMix64).
//
// Every draw is defined bit-for-bit here; std:: distributions are avoided so
// generated corpora are identical across standard libraries. Sub-streams are
// derived by name with split(), so adding a new field to the generator never
// shifts the draws seen by existing fields.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer on [lo, hi], unbiased (rejection sampling).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Uniform index on [0, n).
  std::size_t index(std::size_t n);

  Rng split(std::string_view stream) const;
  Rng split(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
};

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t fnv1a64(std::string_view text);

}  // namespace urs
