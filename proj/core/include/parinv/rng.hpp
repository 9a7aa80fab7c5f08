#pragma once

#include <cstdint>

namespace parinv {

/// SplitMix64 output function.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Purpose tags for keyed substreams.
enum class StreamTag : std::uint64_t {
  proposal = 1,
  transition = 2,
  metropolis = 3,
  prior = 4,
  restart = 5,
  noise = 6,
  layout = 7,
  instance = 8,
};

/// Counter-based random stream. The sequence is a pure function of the key
/// (seed, a, b, tag), so substreams can be created in any order or on any
/// thread and still reproduce bit-for-bit.
///
/// Satisfies UniformRandomBitGenerator.
class StreamRng {
 public:
  using result_type = std::uint64_t;

  explicit StreamRng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                     StreamTag tag = StreamTag::instance) noexcept
      : key_(derive_key(seed, a, b, static_cast<std::uint64_t>(tag))) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept {
    counter_ += kGamma;
    return mix64(key_ + counter_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  static constexpr std::uint64_t derive_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                                            std::uint64_t tag) noexcept {
    std::uint64_t k = mix64(seed + kGamma);
    k = mix64(k ^ (a + 0x632be59bd9b4e019ULL));
    k = mix64(k ^ (b + 0x85157af5ULL));
    return mix64(k ^ (tag * kGamma));
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace parinv
