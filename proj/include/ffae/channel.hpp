#pragma once

// Encoder output stages (average-power normalization, sign quantization with
// its straight-through backward rule) and the stochastic channels: AWGN and
// real-valued Rayleigh block fading, y = h*x + noise with noise variance
// sigma^2 = (2 R Eb/N0)^-1.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>

#include "ffae/layers.hpp"
#include "ffae/rng.hpp"

namespace ffae {

enum class ChannelKind { awgn, rbf };
enum class OutputStage { normalize, quantize };

inline double noise_variance(double rate, double ebn0_db) {
  if (!(rate > 0.0)) throw std::invalid_argument("noise_variance: rate must be positive");
  return 1.0 / (2.0 * rate * std::pow(10.0, ebn0_db / 10.0));
}

struct ChannelConfig {
  ChannelKind kind = ChannelKind::awgn;
  double rate = 4.0 / 7.0;  // k/n
  double ebn0_db = 5.0;
  std::size_t n = 7;

  double noise_variance() const { return ffae::noise_variance(rate, ebn0_db); }
};

struct Codeword {
  Vec symbols;
};

// x = sqrt(n) * a / ||a||: per-symbol average power is exactly one.
inline Codeword normalize_power(const Vec& a) {
  const double norm = l2_norm(a.data(), a.size());
  if (norm <= kNormEps)
    throw std::domain_error("normalize_power: zero-energy encoder output");
  const double scale = std::sqrt(static_cast<double>(a.size())) / norm;
  Codeword cw{a};
  for (double& v : cw.symbols) v *= scale;
  return cw;
}

// Backward of normalize_power: upstream is dLoss/dx, returns dLoss/da.
// With r = ||a||, J = sqrt(n)/r * (I - a a^T / r^2).
inline Vec normalize_power_backward(const Vec& a, const Vec& upstream) {
  if (a.size() != upstream.size())
    throw std::invalid_argument("normalize_power_backward: length mismatch");
  const double norm = l2_norm(a.data(), a.size());
  if (norm <= kNormEps)
    throw std::domain_error("normalize_power_backward: zero-energy input");
  const double scale = std::sqrt(static_cast<double>(a.size())) / norm;
  const double proj = dot(a.data(), upstream.data(), a.size()) / (norm * norm);
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = scale * (upstream[i] - a[i] * proj);
  return out;
}

// Hard BPSK mapping, sign(0) = +1 so ties resolve deterministically.
inline Codeword quantize_sign(const Vec& a) {
  Codeword cw;
  cw.symbols.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) cw.symbols[i] = a[i] >= 0.0 ? 1.0 : -1.0;
  return cw;
}

// Saturated straight-through estimator: the gradient passes where |a| < 1
// (strict) and is blocked elsewhere.
inline Vec ste_backward(const Vec& a, const Vec& upstream) {
  if (a.size() != upstream.size())
    throw std::invalid_argument("ste_backward: length mismatch");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = std::abs(a[i]) < 1.0 ? upstream[i] : 0.0;
  return out;
}

// One fading coefficient per block: Rayleigh-distributed for RBF, exactly 1
// for AWGN (which consumes no randomness).
inline double draw_fading(const ChannelConfig& cfg, RngStream& rng) {
  return cfg.kind == ChannelKind::rbf ? sample_rayleigh_one(rng) : 1.0;
}

// y_i = h*x_i + sigma*z_i. The noiseless limit (sigma = 0) draws nothing.
inline Vec apply_channel(const ChannelConfig& cfg, const Vec& x, double h, RngStream& rng) {
  const double sigma = std::sqrt(cfg.noise_variance());
  Vec y(x.size());
  if (sigma > 0.0) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = h * x[i] + sigma * rng.next_gaussian();
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = h * x[i];
  }
  return y;
}

struct Transmission {
  Vec y;
  double h = 1.0;
};

inline Transmission transmit(const ChannelConfig& cfg, const Codeword& x, RngStream& rng) {
  if (x.symbols.size() != cfg.n)
    throw std::invalid_argument("transmit: codeword length does not match channel config");
  Transmission t;
  t.h = draw_fading(cfg, rng);
  t.y = apply_channel(cfg, x.symbols, t.h, rng);
  return t;
}

}  // namespace ffae
