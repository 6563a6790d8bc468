#pragma once

// Counter-based random streams (Philox 4x32-10, Salmon et al. SC'11).
// Every logical unit of work (laser pulse, time frame, probe draw) gets its
// own stream keyed by (seed, stream id); the draw counter advances within
// the stream. Output is therefore independent of thread scheduling.

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace coincx {

namespace detail {

inline void philox_mulhilo(std::uint32_t a, std::uint32_t b,
                           std::uint32_t& lo, std::uint32_t& hi) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(p);
  hi = static_cast<std::uint32_t>(p >> 32);
}

} // namespace detail

class PhiloxStream {
public:
  PhiloxStream(std::uint64_t seed, std::uint64_t stream)
      : key0_(static_cast<std::uint32_t>(seed)),
        key1_(static_cast<std::uint32_t>(seed >> 32)),
        stream_lo_(static_cast<std::uint32_t>(stream)),
        stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

  std::uint32_t next_u32() {
    if (cache_pos_ == 4) {
      fill_block();
      cache_pos_ = 0;
    }
    return cache_[cache_pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return lo | (hi << 32);
  }

  // Uniform in [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1p-53; }

  // Uniform in (0,1], safe as a log() argument.
  double uniform_pos() { return 1.0 - uniform(); }

  double gaussian() {
    if (have_cached_gauss_) {
      have_cached_gauss_ = false;
      return cached_gauss_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    const double phi = 2.0 * M_PI * uniform();
    cached_gauss_ = r * std::sin(phi);
    have_cached_gauss_ = true;
    return r * std::cos(phi);
  }

  // Knuth inversion; fine for the moderate means used here.
  std::int64_t poisson(double mean) {
    if (mean < 0.0) throw std::invalid_argument("poisson: negative mean");
    if (mean == 0.0) return 0;
    if (mean > 100.0) throw std::invalid_argument("poisson: mean too large for inversion sampler");
    const double limit = std::exp(-mean);
    std::int64_t k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform_pos();
    } while (p > limit);
    return k - 1;
  }

private:
  void fill_block() {
    std::uint32_t c0 = static_cast<std::uint32_t>(counter_);
    std::uint32_t c1 = static_cast<std::uint32_t>(counter_ >> 32);
    std::uint32_t c2 = stream_lo_;
    std::uint32_t c3 = stream_hi_;
    std::uint32_t k0 = key0_;
    std::uint32_t k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      std::uint32_t lo0, hi0, lo1, hi1;
      detail::philox_mulhilo(0xD2511F53u, c0, lo0, hi0);
      detail::philox_mulhilo(0xCD9E8D57u, c2, lo1, hi1);
      const std::uint32_t n0 = hi1 ^ c1 ^ k0;
      const std::uint32_t n1 = lo1;
      const std::uint32_t n2 = hi0 ^ c3 ^ k1;
      const std::uint32_t n3 = lo0;
      c0 = n0; c1 = n1; c2 = n2; c3 = n3;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    cache_[0] = c0; cache_[1] = c1; cache_[2] = c2; cache_[3] = c3;
    ++counter_;
  }

  std::uint32_t key0_, key1_;
  std::uint32_t stream_lo_, stream_hi_;
  std::uint64_t counter_ = 0;
  std::uint32_t cache_[4] = {0, 0, 0, 0};
  int cache_pos_ = 4;
  bool have_cached_gauss_ = false;
  double cached_gauss_ = 0.0;
};

} // namespace coincx
