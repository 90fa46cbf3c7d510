#pragma once

#include <cstdint>
#include <random>

#include "starsec/types.hpp"

namespace starsec {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Deterministic RNG with hand-rolled distributions so that draws are
// bit-identical across standard library implementations. Substreams are
// derived from the original seed, so adding draws to one block never
// shifts another block's sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

  Rng substream(std::uint64_t block) const {
    return Rng(splitmix64(seed_ ^ (block * 0xD6E8FEB86659FD93ULL)));
  }

  std::uint64_t seed() const { return seed_; }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Circularly-symmetric complex normal, unit variance: E|z|^2 = 1.
  cxd cnormal() {
    const double re = normal();
    const double im = normal();
    return cxd(re * M_SQRT1_2, im * M_SQRT1_2);
  }

  CMat cnormal_matrix(int rows, int cols) {
    CMat m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = cnormal();
    return m;
  }

  CVec unit_vector(int n) {
    CVec v(n);
    for (int i = 0; i < n; ++i) v[i] = cnormal();
    const double nrm = v.norm();
    if (nrm == 0.0) {
      v.setZero();
      v[0] = 1.0;
      return v;
    }
    return v / nrm;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Substream identifiers for scenario generation draw blocks.
namespace rng_block {
inline constexpr std::uint64_t kGeometry = 1;
inline constexpr std::uint64_t kDirectLinks = 2;
inline constexpr std::uint64_t kBsRisLink = 3;
inline constexpr std::uint64_t kRisUserLinks = 4;
inline constexpr std::uint64_t kSelfInterference = 5;
inline constexpr std::uint64_t kBeamformerInit = 6;
inline constexpr std::uint64_t kDegeneratePairs = 7;
}  // namespace rng_block

}  // namespace starsec
