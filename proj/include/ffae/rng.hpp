#pragma once

// Seeded, counter-based random number generation (Philox4x32-10) plus the
// few distributions the simulator needs. A stream is addressed by
// (seed, stream_id): the same pair always reproduces the same sequence, and
// distinct stream ids yield statistically independent sequences, so parallel
// workers can each own a cheap substream without coordination.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "ffae/mat.hpp"

namespace ffae {

class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_id_(stream_id) {
    const std::uint64_t k = splitmix64(seed);
    key0_ = static_cast<std::uint32_t>(k);
    key1_ = static_cast<std::uint32_t>(k >> 32);
    stream_lo_ = static_cast<std::uint32_t>(stream_id);
    stream_hi_ = static_cast<std::uint32_t>(stream_id >> 32);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64() {
    if (avail_ == 0) refill();
    return buf_[--avail_];
  }

  // Uniform in [0, 1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe as a log() argument.
  double next_unit_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Uniform integer in {0, ..., bound-1}.
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("next_below: bound must be positive");
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
  }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_unit_pos();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.28318530717958647692 * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  void refill() {
    std::uint32_t c0 = static_cast<std::uint32_t>(block_);
    std::uint32_t c1 = static_cast<std::uint32_t>(block_ >> 32);
    std::uint32_t c2 = stream_lo_;
    std::uint32_t c3 = stream_hi_;
    for (std::uint32_t round = 0; round < 10; ++round) {
      const std::uint32_t k0 = key0_ + round * 0x9E3779B9u;
      const std::uint32_t k1 = key1_ + round * 0xBB67AE85u;
      const std::uint64_t p0 = 0xD2511F53ull * c0;
      const std::uint64_t p2 = 0xCD9E8D57ull * c2;
      const std::uint32_t n0 = static_cast<std::uint32_t>(p2 >> 32) ^ c1 ^ k0;
      const std::uint32_t n1 = static_cast<std::uint32_t>(p2);
      const std::uint32_t n2 = static_cast<std::uint32_t>(p0 >> 32) ^ c3 ^ k1;
      const std::uint32_t n3 = static_cast<std::uint32_t>(p0);
      c0 = n0;
      c1 = n1;
      c2 = n2;
      c3 = n3;
    }
    buf_[1] = (static_cast<std::uint64_t>(c1) << 32) | c0;
    buf_[0] = (static_cast<std::uint64_t>(c3) << 32) | c2;
    avail_ = 2;
    ++block_;
  }

  std::uint64_t seed_, stream_id_;
  std::uint32_t key0_, key1_;
  std::uint32_t stream_lo_, stream_hi_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buf_{};
  int avail_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

inline RngStream make_rng(std::uint64_t seed, std::uint64_t stream_id) {
  return RngStream(seed, stream_id);
}

// n i.i.d. samples from N(mean, std^2). A zero std is the degenerate
// point-mass and consumes no randomness.
inline Vec sample_gaussian(RngStream& rng, double mean, double std, std::size_t n) {
  if (std < 0.0) throw std::invalid_argument("sample_gaussian: negative std");
  Vec out(n, mean);
  if (std > 0.0)
    for (std::size_t i = 0; i < n; ++i) out[i] = mean + std * rng.next_gaussian();
  return out;
}

// Rayleigh fading magnitudes with unit mean-square, E[H^2] = 1 (scale
// 1/sqrt(2) folded into the transform: H = sqrt(-ln U)).
inline Vec sample_rayleigh(RngStream& rng, std::size_t n) {
  Vec out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::sqrt(-std::log(rng.next_unit_pos()));
  return out;
}

inline double sample_rayleigh_one(RngStream& rng) {
  return std::sqrt(-std::log(rng.next_unit_pos()));
}

enum class InitScheme { kaiming_uniform, zeros };

struct InitSpec {
  InitScheme scheme = InitScheme::kaiming_uniform;
};

inline double kaiming_uniform_bound(std::size_t fan_in) {
  return std::sqrt(6.0 / static_cast<double>(fan_in));
}

// Weight matrix [fan_out x fan_in] and an all-zero bias vector. Kaiming
// uniform draws weights from [-sqrt(6/fan_in), sqrt(6/fan_in)].
inline std::pair<Mat, Vec> init_dense(RngStream& rng, std::size_t fan_in,
                                      std::size_t fan_out, InitSpec spec = {}) {
  if (fan_in == 0 || fan_out == 0)
    throw std::invalid_argument("init_dense: fan_in and fan_out must be positive");
  Mat w(fan_out, fan_in);
  if (spec.scheme == InitScheme::kaiming_uniform) {
    const double bound = kaiming_uniform_bound(fan_in);
    for (double& v : w.a) v = (2.0 * rng.next_unit() - 1.0) * bound;
  }
  return {std::move(w), Vec(fan_out, 0.0)};
}

}  // namespace ffae
