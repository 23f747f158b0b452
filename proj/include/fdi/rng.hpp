#pragma once

#include <cmath>
#include <cstdint>

#include "fdi/common.hpp"

namespace fdi {

// Counter-addressed randomness. Every draw is a pure function of
// (master seed, stream tag, trial, iteration, lane), so trials can run on any
// number of workers and still reproduce bit-identical sequences.

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Substream tags; keep values stable, they are part of the seeding scheme.
enum class Stream : std::uint64_t {
  kProbe = 0x01,
  kNoise = 0x02,
  kInit = 0x03,
  kMonteCarlo = 0x04,
  kOracle = 0x05,
  kTest = 0x06,
};

class CounterRng {
 public:
  CounterRng(std::uint64_t master_seed, Stream stream, std::uint64_t trial)
      : base_(splitmix64(splitmix64(master_seed ^ 0xa5a5a5a5a5a5a5a5ULL) +
                         (static_cast<std::uint64_t>(stream) << 32) + trial)) {}

  std::uint64_t bits(std::uint64_t k, std::uint64_t lane) const {
    return splitmix64(base_ + splitmix64(k * 0x100000001b3ULL + lane));
  }

  /// Uniform draw in [0,1).
  double uniform01(std::uint64_t k, std::uint64_t lane) const {
    return static_cast<double>(bits(k, lane) >> 11) * 0x1.0p-53;
  }

  /// Uniform draw in (0,1]; safe as a log argument.
  double uniform01_open(std::uint64_t k, std::uint64_t lane) const {
    return (static_cast<double>(bits(k, lane) >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; consumes uniform lanes 2*lane, 2*lane+1.
  double gaussian(std::uint64_t k, std::uint64_t lane) const {
    const double u1 = uniform01_open(k, 2 * lane);
    const double u2 = uniform01(k, 2 * lane + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Uniform draw from the unit sphere in R^p (normalized gaussian vector;
  /// degenerate near-zero draws are rejected and redrawn).
  Vector sphere(std::uint64_t k, int p) const {
    Vector v(p);
    for (std::uint64_t attempt = 0;; ++attempt) {
      for (int i = 0; i < p; ++i) {
        v[i] = gaussian(k, attempt * static_cast<std::uint64_t>(p) + i);
      }
      const double n = v.norm();
      if (n > 1e-12) return v / n;
    }
  }

 private:
  std::uint64_t base_;
};

}  // namespace fdi
