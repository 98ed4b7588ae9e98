#pragma once

#include <cstdint>
#include <cmath>
#include <numbers>
#include <vector>

namespace shiftlens {

// Counter-based pseudo-random generator. Output i is a fixed bijective mix of
// (key, i), so any draw index can be produced without generating its
// predecessors and a generator forked per work item yields the same stream
// regardless of scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix64(seed + kKeySalt)) {}

  // Derives an independent generator for a substream (sample index, run id, ...).
  Rng fork(std::uint64_t stream) const {
    Rng r = *this;
    r.key_ = mix64(key_ ^ mix64(stream + kForkSalt));
    r.counter_ = 0;
    return r;
  }

  std::uint64_t next_u64() { return mix64(key_ + kGamma * ++counter_); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n), n >= 1.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller. Draws two uniforms per call.
  double gaussian() {
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices from [0, n), in draw order.
  std::vector<int> sample_without_replacement(int n, int k);

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ull;
  static constexpr std::uint64_t kKeySalt = 0x8e1f0f37c2a31b55ull;
  static constexpr std::uint64_t kForkSalt = 0x5851f42d4c957f2dull;

  static std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// 32-bit CRC (IEEE 802.3 polynomial), used for blob checksums in file formats.
std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0);

}  // namespace shiftlens
