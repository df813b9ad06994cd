#ifndef EGAN_RANDOM_HPP_
#define EGAN_RANDOM_HPP_

#include <cstdint>
#include <optional>
#include <random>

#include "egan/types.hpp"

namespace egan {

// Seeded generator used everywhere randomness appears.
//
// Bits come from std::mt19937_64, whose output sequence is fixed by the C++
// standard. Uniforms take the top 53 bits; normals use the Box-Muller
// transform (cosine branch first, sine branch cached for the next call). Both
// are spelled out here rather than delegated to std:: distributions, whose
// algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal();

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols);

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

// Deterministic child seed, so that independent work items (per-sample
// likelihoods, per-dimension table rows) do not share streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace egan

#endif  // EGAN_RANDOM_HPP_
