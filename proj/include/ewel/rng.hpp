#pragma once

#include <array>
#include <bit>
#include <cstddef>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace ewel {

//! Philox4x32-10 counter-based generator (Salmon et al., SC'11).
//! A pure function of (counter, key); no hidden state.
struct Philox4x32
{
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter apply(Counter ctr, Key key)
  {
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
#pragma GCC unroll 10
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{ kMul0 } * ctr[0];
      const std::uint64_t p1 = std::uint64_t{ kMul1 } * ctr[2];
      ctr = { static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
              static_cast<std::uint32_t>(p1),
              static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
              static_cast<std::uint32_t>(p0) };
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }
};

//! Random streams used by the simulation layer. Each draw is addressed by
//! (seed, stream, path, index), so results never depend on evaluation order.
enum class Stream : std::uint32_t
{
  base_increments = 0,
  // refinement level l (l >= 1) uses stream refinement_base + l
  refinement_base = 0x100,
  general_bridge = 0x200,
  interpolation = 0x300,
  validation = 0x400,
  synthetic = 0x500,
};

inline std::uint32_t stream_id(Stream s, std::uint32_t offset = 0)
{
  return static_cast<std::uint32_t>(s) + offset;
}

//! 53-bit uniform in the open interval (0,1).
inline double uniform_open(std::uint32_t hi, std::uint32_t lo)
{
  const std::uint64_t bits =
    ((std::uint64_t{ hi } << 32) | lo) >> 11; // 53 bits
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

//! Two independent uniforms on (0,1) for one address.
inline std::pair<double, double> uniform_pair(std::uint64_t seed,
                                              std::uint32_t stream,
                                              std::uint64_t path,
                                              std::uint32_t index)
{
  const auto out = Philox4x32::apply(
    { index, stream, static_cast<std::uint32_t>(path),
      static_cast<std::uint32_t>(path >> 32) },
    { static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32) });
  return { uniform_open(out[0], out[1]), uniform_open(out[2], out[3]) };
}

//! Natural logarithm of a positive normal double. Branch-free so that batch
//! loops vectorize; relative error below 3e-16.
inline double log_positive(double u)
{
  constexpr std::uint64_t kShift = 0x00095F619980C433ull; // 2 - sqrt(2) in mantissa units
  const std::uint64_t adj = std::bit_cast<std::uint64_t>(u) + kShift;
  const double e = static_cast<double>(static_cast<std::int64_t>(adj >> 52) - 1023);
  const double m = std::bit_cast<double>((adj & 0x000FFFFFFFFFFFFFull) + 0x3FF0000000000000ull - kShift);
  // log m = 2 atanh(f) with |f| <= 0.1716
  const double f = (m - 1.0) / (m + 1.0);
  const double f2 = f * f;
  double p = 1.0 / 23.0;
  p = p * f2 + 1.0 / 21.0;
  p = p * f2 + 1.0 / 19.0;
  p = p * f2 + 1.0 / 17.0;
  p = p * f2 + 1.0 / 15.0;
  p = p * f2 + 1.0 / 13.0;
  p = p * f2 + 1.0 / 11.0;
  p = p * f2 + 1.0 / 9.0;
  p = p * f2 + 1.0 / 7.0;
  p = p * f2 + 1.0 / 5.0;
  p = p * f2 + 1.0 / 3.0;
  p = p * f2 + 1.0;
  constexpr double kLn2Hi = 0x1.62e42fefa3800p-1;
  constexpr double kLn2Lo = 0x1.ef35793c76730p-45;
  return e * kLn2Hi + (2.0 * f * p + e * kLn2Lo);
}

//! sin and cos of 2 pi u for u in [0, 1], branch-free.
inline void sincos_2pi(double u, double& s, double& c)
{
  constexpr double kRound = 0x1.8p52;
  const double a = 2.0 * u;                    // angle pi a, a in [0, 2]
  const double q = ((2.0 * a) + kRound) - kRound; // quadrant 0..4
  const double v = 3.14159265358979323846 * (a - 0.5 * q); // [-pi/4, pi/4]
  const double w = v * v;
  double cv = -1.0 / 6402373705728000.0;
  cv = cv * w + 1.0 / 20922789888000.0;
  cv = cv * w - 1.0 / 87178291200.0;
  cv = cv * w + 1.0 / 479001600.0;
  cv = cv * w - 1.0 / 3628800.0;
  cv = cv * w + 1.0 / 40320.0;
  cv = cv * w - 1.0 / 720.0;
  cv = cv * w + 1.0 / 24.0;
  cv = cv * w - 0.5;
  cv = cv * w + 1.0;
  double sv = 1.0 / 121645100408832000.0;
  sv = sv * w - 1.0 / 355687428096000.0;
  sv = sv * w + 1.0 / 1307674368000.0;
  sv = sv * w - 1.0 / 6227020800.0;
  sv = sv * w + 1.0 / 39916800.0;
  sv = sv * w - 1.0 / 362880.0;
  sv = sv * w + 1.0 / 5040.0;
  sv = sv * w - 1.0 / 120.0;
  sv = sv * w + 1.0 / 6.0;
  sv = v - v * w * sv;
  // rotate by q quarter turns
  const double t1 = q == 1.0 ? 1.0 : 0.0;
  const double t2 = q == 2.0 ? 1.0 : 0.0;
  const double t3 = q == 3.0 ? 1.0 : 0.0;
  const double cq = 1.0 - t1 - 2.0 * t2 - t3;
  const double sq = t1 - t3;
  c = cv * cq - sv * sq;
  s = sv * cq + cv * sq;
}

//! Two independent standard normals (Box-Muller) from two uniforms.
inline void box_muller(double u1, double u2, double& z0, double& z1)
{
  const double r = std::sqrt(-2.0 * log_positive(u1));
  double s = 0.0;
  double c = 0.0;
  sincos_2pi(u2, s, c);
  z0 = r * c;
  z1 = r * s;
}

//! Two independent standard normals for one address.
inline std::pair<double, double> normal_pair(std::uint64_t seed,
                                             std::uint32_t stream,
                                             std::uint64_t path,
                                             std::uint32_t index)
{
  const auto [u1, u2] = uniform_pair(seed, stream, path, index);
  double z0 = 0.0;
  double z1 = 0.0;
  box_muller(u1, u2, z0, z1);
  return { z0, z1 };
}

//! Normal pairs for paths path0 .. path0+count at a common pair index:
//! first[k], second[k] equal normal_pair(seed, stream, path0 + k, index).
inline void normal_pairs_across_paths(std::uint64_t seed,
                                      std::uint32_t stream,
                                      std::uint64_t path0,
                                      std::size_t count,
                                      std::uint32_t index,
                                      double* __restrict first,
                                      double* __restrict second)
{
  const Philox4x32::Key key{ static_cast<std::uint32_t>(seed),
                             static_cast<std::uint32_t>(seed >> 32) };
  // two passes: the fused loop spills registers and runs slower
  for (std::size_t k = 0; k < count; ++k) {
    const std::uint64_t path = path0 + k;
    const auto out = Philox4x32::apply(
      { index, stream, static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32) },
      key);
    first[k] = uniform_open(out[0], out[1]);
    second[k] = uniform_open(out[2], out[3]);
  }
  for (std::size_t k = 0; k < count; ++k) {
    double z0 = 0.0;
    double z1 = 0.0;
    box_muller(first[k], second[k], z0, z1);
    first[k] = z0;
    second[k] = z1;
  }
}

//! Fills out[0..n) with standard normals drawn from consecutive pair indices
//! starting at 0 for the given (seed, stream, path).
inline void fill_normals(std::uint64_t seed,
                         std::uint32_t stream,
                         std::uint64_t path,
                         double* out,
                         std::size_t n)
{
  std::size_t i = 0;
  std::uint32_t pair = 0;
  for (; i + 1 < n; i += 2, ++pair) {
    const auto [z0, z1] = normal_pair(seed, stream, path, pair);
    out[i] = z0;
    out[i + 1] = z1;
  }
  if (i < n)
    out[i] = normal_pair(seed, stream, path, pair).first;
}

//! Mixes a 64-bit value (splitmix64 finalizer); used to derive sub-seeds.
constexpr std::uint64_t mix64(std::uint64_t z)
{
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

} // namespace ewel
