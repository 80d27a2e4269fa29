#pragma once
#include <cmath>
#include <cstdint>
#include <vector>

#include "ets/errors.hpp"

namespace ets {

// Counter-based generator built on the SplitMix64 finalizer.
//
//   output(i) = mix64(key + (i+1) * kGamma)
//
// with key derived from a (seed, stream) pair.  No hidden state beyond the
// counter, so sample s of a batch can own stream s and be generated in any
// order (or in parallel) with identical results.  The constants are the
// published SplitMix64 ones; any implementation of this recipe reproduces the
// same numbers from the same (seed, stream).
class CounterRng {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

  static std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) {
    return mix64(seed + kGamma) ^ mix64(stream * kGamma + 0x632BE59BD9B4E019ull);
  }

  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(derive_key(seed, stream)) {}

  std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kGamma); }

  // Uniform on (0,1]: never 0, so log() below is safe.
  double next_unit() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Uniform on [0,1) for interpolation weights.
  double next_unit_open() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the pair's second value is cached.
  double next_gauss() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  // Uniform index in [0, n) by 128-bit multiply (no modulo bias).
  std::size_t next_index(std::size_t n) {
    if (n == 0) throw shape_error("CounterRng::next_index: n must be positive");
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  std::vector<double> gauss_vector(std::size_t n) {
    std::vector<double> out(n);
    for (auto& x : out) x = next_gauss();
    return out;
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

// Stream id conventions, so independent uses of the same seed never collide.
// Simulation reserves the low range [0, 2^48) for per-sample streams.
namespace streams {
constexpr std::uint64_t kSample = 0;            // + sample index
constexpr std::uint64_t kInit = 1ull << 48;     // + network index
constexpr std::uint64_t kNoise = 2ull << 48;    // + training iteration
constexpr std::uint64_t kData = 3ull << 48;     // + training iteration
constexpr std::uint64_t kScore = 4ull << 48;    // + repetition
constexpr std::uint64_t kShuffle = 5ull << 48;  // + context-defined index
}  // namespace streams

}  // namespace ets
