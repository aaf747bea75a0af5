#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace bgw {

/// Philox4x32-10 block function (Salmon et al., Random123).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Counter-based random stream. A draw is a pure function of
/// (seed, stream id, draw index), so results never depend on the order in
/// which draws are requested.
class CounterStream {
 public:
  CounterStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_(stream_id) {}

  std::uint64_t bits(std::uint64_t index) const;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform(std::uint64_t index) const {
    return static_cast<double>(bits(index) >> 11) * 0x1.0p-53;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
};

/// Packs two 32-bit keys into a stream id.
constexpr std::uint64_t stream_key(std::uint64_t hi, std::uint64_t lo) {
  return (hi << 32) | (lo & 0xffffffffULL);
}

/// Draw index of couple `k` of parent type `type` within one generation.
constexpr std::uint64_t couple_index(std::size_t type, std::uint64_t k) {
  return (static_cast<std::uint64_t>(type) << 48) | k;
}

/// UniformRandomBitGenerator over a CounterStream, for use with <random>
/// distributions. Successive calls consume successive draw indices.
class CounterEngine {
 public:
  using result_type = std::uint64_t;

  CounterEngine(std::uint64_t seed, std::uint64_t stream_id) : stream_(seed, stream_id) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return stream_.bits(next_++); }

 private:
  CounterStream stream_;
  std::uint64_t next_ = 0;
};

}  // namespace bgw
