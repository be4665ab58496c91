#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace entroscope {

// Deterministic, portable RNG. std:: distributions are implementation-defined,
// so everything here is spelled out to keep node sets bit-reproducible from a seed.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class RngStream {
 public:
  // stream_id picks a decorrelated substream of the same logical seed;
  // chunked Monte Carlo uses stream_id = chunk index.
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0) {
    std::uint64_t sm = seed ^ (0xa0761d6478bd642fULL * (stream_id + 1));
    for (auto& w : s_) w = splitmix64(sm);
  }

  std::uint64_t next_u64() {
    auto rotl = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
    std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform on (0,1); never returns 0, so log() below is safe
  double u01() {
    std::uint64_t bits = next_u64() >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  // Box-Muller, both coordinates consumed in order (no cached spare: keeps the
  // stream state a pure function of the draw count)
  void normal_pair(double& a, double& b) {
    double u1 = u01();
    double u2 = u01();
    double r = std::sqrt(-2.0 * std::log(u1));
    a = r * std::cos(2.0 * M_PI * u2);
    b = r * std::sin(2.0 * M_PI * u2);
  }

  double normal() {
    double a, b;
    normal_pair(a, b);
    return a;
  }

 private:
  std::array<std::uint64_t, 4> s_{};
};

// Halton low-discrepancy sequence (1-based index), used for deterministic
// sampling regions (injectivity probes, bound estimation, validation points).
inline double halton(std::uint64_t index, std::uint64_t base) {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= static_cast<double>(base);
    r += f * static_cast<double>(index % base);
    index /= base;
  }
  return r;
}

inline std::vector<double> halton_point(std::uint64_t index, int dim) {
  static constexpr std::uint64_t primes[9] = {2, 3, 5, 7, 11, 13, 17, 19, 23};
  std::vector<double> p(static_cast<size_t>(dim));
  for (int d = 0; d < dim; ++d) p[static_cast<size_t>(d)] = halton(index, primes[d % 9]);
  return p;
}

}  // namespace entroscope
