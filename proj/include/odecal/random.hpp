#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace odecal {

// Philox4x32-10 (Salmon et al., SC'11). The output for a given
// (key, counter) pair is a pure function, so every stream is reproducible
// independently of how many other streams were drawn or in which order.
namespace philox {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline constexpr std::uint32_t kMulA = 0xD2511F53;
inline constexpr std::uint32_t kMulB = 0xCD9E8D57;
inline constexpr std::uint32_t kWeylA = 0x9E3779B9;
inline constexpr std::uint32_t kWeylB = 0xBB67AE85;

constexpr Counter
round(const Counter& c, const Key& k)
{
  const std::uint64_t p0 = static_cast<std::uint64_t>(kMulA) * c[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kMulB) * c[2];
  const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const auto lo0 = static_cast<std::uint32_t>(p0);
  const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const auto lo1 = static_cast<std::uint32_t>(p1);
  return { hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0 };
}

constexpr Counter
block(Counter c, Key k)
{
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      k[0] += kWeylA;
      k[1] += kWeylB;
    }
    c = round(c, k);
  }
  return c;
}

} // namespace philox

/// One random stream addressed by (seed, stream id). Draw i of the stream is
/// philox(key = seed, counter = (i, stream)).
class RandomStream
{
public:
  RandomStream(std::uint64_t seed, std::uint64_t stream)
    : key_{ static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32) }
    , stream_(stream)
  {}

  std::uint32_t next_u32()
  {
    if (lane_ == 4) {
      const philox::Counter ctr{ static_cast<std::uint32_t>(position_),
                                 static_cast<std::uint32_t>(position_ >> 32),
                                 static_cast<std::uint32_t>(stream_),
                                 static_cast<std::uint32_t>(stream_ >> 32) };
      buffer_ = philox::block(ctr, key_);
      ++position_;
      lane_ = 0;
    }
    return buffer_[lane_++];
  }

  std::uint64_t next_u64()
  {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  //! Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  //! Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n)
  {
    // rejection keeps the result exactly uniform
    const std::uint64_t limit = ~std::uint64_t{ 0 } - (~std::uint64_t{ 0 } % n);
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  //! Standard normal via Box-Muller.
  double normal()
  {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0)
      u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

private:
  philox::Key key_;
  std::uint64_t stream_;
  std::uint64_t position_ = 0;
  philox::Counter buffer_{};
  int lane_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Documented stream ids. Noise for component j uses noise_base + j.
namespace streams {
inline constexpr std::uint64_t structure = 1;
inline constexpr std::uint64_t initial_conditions = 2;
inline constexpr std::uint64_t network_init = 3;
inline constexpr std::uint64_t noise_base = 1000;
} // namespace streams

} // namespace odecal
