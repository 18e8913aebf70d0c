#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace l1ae {

// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent generator for substream `stream` of `seed`. Streams are a pure
/// function of (seed, stream), so work split by index is order-independent.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  const std::uint64_t a = mix64(seed);
  const std::uint64_t b = mix64(a ^ mix64(stream + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32)};
  return std::mt19937_64(seq);
}

/// Stream tags keep the different consumers of one run seed apart.
enum class StreamTag : std::uint64_t {
  ChannelSample = 1,
  Baseline = 2,
  ModelInit = 3,
  EpochShuffle = 4,
};

inline std::mt19937_64 make_stream(std::uint64_t seed, StreamTag tag, std::uint64_t index = 0) {
  return make_stream(mix64(seed ^ (static_cast<std::uint64_t>(tag) << 56)), index);
}

/// Normal draw rejected outside +-`bound` standard deviations.
template <class Rng>
double truncated_normal(Rng& rng, double stddev, double bound = 2.0) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (;;) {
    const double z = dist(rng);
    if (std::abs(z) <= bound) return z * stddev;
  }
}

} // namespace l1ae
